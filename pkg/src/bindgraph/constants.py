"""Amino-acid tables, atom-name rosters, and token vocabularies.

The residue token vocabulary has 33 entries: the 20 canonical amino acids
(alphabetical one-letter order), UNK, MASK, and 11 reserved slots kept for
format stability.  The atom-name vocabulary has 37 entries: the 36 canonical
heavy-atom names occurring in the 20 amino acids plus UNK.
"""

from __future__ import annotations

AA1 = "ACDEFGHIKLMNPQRSTVWY"

AA3_TO_AA1 = {
    "ALA": "A", "ARG": "R", "ASN": "N", "ASP": "D", "CYS": "C",
    "GLN": "Q", "GLU": "E", "GLY": "G", "HIS": "H", "ILE": "I",
    "LEU": "L", "LYS": "K", "MET": "M", "PHE": "F", "PRO": "P",
    "SER": "S", "THR": "T", "TRP": "W", "TYR": "Y", "VAL": "V",
}
AA1_TO_AA3 = {v: k for k, v in AA3_TO_AA1.items()}

# Non-canonical residues that map onto a standard parent; everything else
# parses as UNK.
MODIFIED_PARENT = {
    "MSE": "MET", "SEC": "CYS", "PYL": "LYS", "MLY": "LYS", "HYP": "PRO",
    "SEP": "SER", "TPO": "THR", "PTR": "TYR", "CSO": "CYS", "KCX": "LYS",
}

UNK_AA = "X"

# Residue token ids: 20 canonical + UNK + MASK + 11 reserved (vocab 33).
RESIDUE_TOKENS = list(AA1) + [UNK_AA, "<mask>"] + [f"<r{i}>" for i in range(11)]
RESIDUE_VOCAB = len(RESIDUE_TOKENS)  # 33
TOKEN_INDEX = {t: i for i, t in enumerate(RESIDUE_TOKENS)}
UNK_TOKEN = TOKEN_INDEX[UNK_AA]       # 20
MASK_TOKEN = TOKEN_INDEX["<mask>"]    # 21
CANONICAL_TOKENS = tuple(range(20))

# 36 canonical heavy-atom names plus UNK (vocab 37).  Order: backbone first,
# then side-chain names grouped by element distance from CA.
ATOM_NAMES = [
    "N", "CA", "C", "O", "CB",
    "CG", "CG1", "CG2", "OG", "OG1", "SG",
    "CD", "CD1", "CD2", "ND1", "ND2", "OD1", "OD2", "SD",
    "CE", "CE1", "CE2", "CE3", "NE", "NE1", "NE2", "OE1", "OE2",
    "CH2", "NH1", "NH2", "NZ",
    "CZ", "CZ2", "CZ3", "OH",
]
ATOM_VOCAB = len(ATOM_NAMES) + 1  # 37, last slot = UNK atom
ATOM_INDEX = {n: i for i, n in enumerate(ATOM_NAMES)}
UNK_ATOM = ATOM_VOCAB - 1

BACKBONE_ATOMS = ("N", "CA", "C", "O")

# Side-chain slots for the Cbeta-to-sidechain distance features: the 32
# non-backbone names of the atom roster, in roster order.
SIDECHAIN_SLOTS = [n for n in ATOM_NAMES if n not in BACKBONE_ATOMS]
N_SIDECHAIN_SLOTS = len(SIDECHAIN_SLOTS)  # 32

# Heavy atoms expected per residue type (backbone + side chain).
RESIDUE_ATOMS = {
    "ALA": ["N", "CA", "C", "O", "CB"],
    "ARG": ["N", "CA", "C", "O", "CB", "CG", "CD", "NE", "CZ", "NH1", "NH2"],
    "ASN": ["N", "CA", "C", "O", "CB", "CG", "OD1", "ND2"],
    "ASP": ["N", "CA", "C", "O", "CB", "CG", "OD1", "OD2"],
    "CYS": ["N", "CA", "C", "O", "CB", "SG"],
    "GLN": ["N", "CA", "C", "O", "CB", "CG", "CD", "OE1", "NE2"],
    "GLU": ["N", "CA", "C", "O", "CB", "CG", "CD", "OE1", "OE2"],
    "GLY": ["N", "CA", "C", "O"],
    "HIS": ["N", "CA", "C", "O", "CB", "CG", "ND1", "CD2", "CE1", "NE2"],
    "ILE": ["N", "CA", "C", "O", "CB", "CG1", "CG2", "CD1"],
    "LEU": ["N", "CA", "C", "O", "CB", "CG", "CD1", "CD2"],
    "LYS": ["N", "CA", "C", "O", "CB", "CG", "CD", "CE", "NZ"],
    "MET": ["N", "CA", "C", "O", "CB", "CG", "SD", "CE"],
    "PHE": ["N", "CA", "C", "O", "CB", "CG", "CD1", "CD2", "CE1", "CE2", "CZ"],
    "PRO": ["N", "CA", "C", "O", "CB", "CG", "CD"],
    "SER": ["N", "CA", "C", "O", "CB", "OG"],
    "THR": ["N", "CA", "C", "O", "CB", "OG1", "CG2"],
    "TRP": ["N", "CA", "C", "O", "CB", "CG", "CD1", "CD2", "NE1", "CE2",
            "CE3", "CZ2", "CZ3", "CH2"],
    "TYR": ["N", "CA", "C", "O", "CB", "CG", "CD1", "CD2", "CE1", "CE2",
            "CZ", "OH"],
    "VAL": ["N", "CA", "C", "O", "CB", "CG1", "CG2"],
    "UNK": ["N", "CA", "C", "O"],
}

# GLINTER-style 10-way atom chemistry: 4 backbone types + 6 side-chain types
# (CB, C, N, O, S, H).  Hydrogens are dropped at parse time so the H slot
# stays zero; the vocabulary keeps it for dimensional compatibility.
GLINTER_ATOM_TYPES = ["bb_CA", "bb_N", "bb_C", "bb_O",
                      "sc_CB", "sc_C", "sc_N", "sc_O", "sc_S", "sc_H"]


def glinter_atom_type(name: str, element: str) -> int:
    """10-way chemical type index for a heavy atom."""
    if name in ("CA", "N", "C", "O"):
        return {"CA": 0, "N": 1, "C": 2, "O": 3}[name]
    if name == "CB":
        return 4
    return {"C": 5, "N": 6, "O": 7, "S": 8, "H": 9}.get(element.upper(), 5)


def aa3_to_canonical(resname: str) -> str:
    """Map a 3-letter residue name to a canonical one-letter code or UNK."""
    resname = resname.upper()
    if resname in AA3_TO_AA1:
        return AA3_TO_AA1[resname]
    if resname in MODIFIED_PARENT:
        return AA3_TO_AA1[MODIFIED_PARENT[resname]]
    return UNK_AA


def is_polymer_resname(resname: str) -> bool:
    """True for residue names treated as polypeptide residues."""
    resname = resname.upper()
    return resname in AA3_TO_AA1 or resname in MODIFIED_PARENT or resname == "UNK"


def token_of(aa: str) -> int:
    return TOKEN_INDEX.get(aa, UNK_TOKEN)
