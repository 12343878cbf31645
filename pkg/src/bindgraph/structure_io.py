"""Macromolecular structure parsing and the shared in-memory model.

PDB (fixed-column) and mmCIF (category loops) are supported.  Parsing keeps
the first model only, drops hydrogens and non-polymer entities, resolves
alternate locations by highest occupancy then first-seen, and maps modified
residues onto their standard parent (everything else becomes UNK).
Structures are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .constants import UNK_AA, aa3_to_canonical, is_polymer_resname


class ParseError(ValueError):
    """Malformed structure file; message carries line number and context."""


class EmptyStructureError(ParseError):
    """File contained no polymer chains."""


class FrameError(ValueError):
    """Backbone frame unavailable (missing or collinear N/CA/C)."""


@dataclass
class Atom:
    name: str
    element: str
    pos: np.ndarray          # (3,) Angstrom
    resolved: bool = True

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=np.float64)
        if not self.name:
            raise ValueError("atom name must be nonempty")
        if self.resolved and not np.all(np.isfinite(self.pos)):
            raise ValueError(f"atom {self.name}: non-finite coordinates")


@dataclass
class Residue:
    index: int               # 0-based position in chain
    seq_id: int              # author residue number
    aa: str                  # one-letter canonical or UNK
    atoms: list[Atom] = field(default_factory=list)
    icode: str = ""

    def atom(self, name: str) -> Atom | None:
        for a in self.atoms:
            if a.name == name:
                return a
        return None

    def coord(self, name: str) -> np.ndarray | None:
        a = self.atom(name)
        return a.pos if a is not None and a.resolved else None


@dataclass
class Chain:
    id: str
    residues: list[Residue]
    role: str = "context"    # design | target | context

    def __len__(self):
        return len(self.residues)

    @property
    def sequence(self) -> str:
        return "".join(r.aa for r in self.residues)


@dataclass
class Structure:
    id: str
    chains: list[Chain]
    resolution: float | None = None
    method: str | None = None

    def chain(self, chain_id: str) -> Chain:
        for c in self.chains:
            if c.id == chain_id:
                return c
        raise KeyError(f"no chain {chain_id!r} in structure {self.id!r}")

    @property
    def n_residues(self) -> int:
        return sum(len(c) for c in self.chains)


# ---------------------------------------------------------------------------
# parsing


def parse_structure(data: bytes | str, fmt: str) -> Structure:
    """Parse PDB or mmCIF content into a Structure."""
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    if fmt == "pdb":
        return _parse_pdb(data)
    if fmt == "mmcif":
        return _parse_mmcif(data)
    raise ValueError(f"unknown format {fmt!r} (expected 'pdb' or 'mmcif')")


def load_structure(path) -> Structure:
    """Parse a file, inferring the format from its extension."""
    text = open(path, "rb").read()
    name = str(path).lower()
    fmt = "mmcif" if name.endswith((".cif", ".mmcif")) else "pdb"
    return parse_structure(text, fmt)


def _is_hydrogen(name: str, element: str) -> bool:
    el = element.strip().upper()
    if el in ("H", "D"):
        return True
    if el:
        return False
    stripped = name.lstrip("0123456789")
    return stripped[:1] in ("H", "D")


class _Builder:
    """Accumulates raw atom records and resolves them into a Structure."""

    def __init__(self, entry_id: str):
        self.entry_id = entry_id
        self.records: list[tuple] = []  # (chain, seq, icode, resname, atom,
        #                                  altloc, occ, element, xyz)
        self.resolution: float | None = None
        self.method: str | None = None

    def add(self, chain, seq, icode, resname, atom_name, altloc, occ,
            element, xyz, line_no, line):
        resname = resname.strip().upper()
        if not is_polymer_resname(resname):
            return
        if _is_hydrogen(atom_name, element):
            return
        if not np.all(np.isfinite(xyz)):
            raise ParseError(f"line {line_no}: non-finite coordinates: {line!r}")
        self.records.append((chain, seq, icode, resname, atom_name,
                             altloc, occ, element.strip(), xyz))

    def build(self) -> Structure:
        # altLoc resolution: keep highest occupancy, then first seen, per
        # (chain, seq, icode, atom name).
        best: dict[tuple, tuple] = {}
        order: list[tuple] = []
        for rec in self.records:
            chain, seq, icode, resname, atom_name = rec[0], rec[1], rec[2], rec[3], rec[4]
            key = (chain, seq, icode, atom_name)
            if key not in best:
                best[key] = rec
                order.append(key)
            elif rec[6] > best[key][6]:
                best[key] = rec
        chains: dict[str, dict[tuple, Residue]] = {}
        chain_order: list[str] = []
        for key in order:
            chain, seq, icode, resname, atom_name, _alt, _occ, element, xyz = best[key]
            if chain not in chains:
                chains[chain] = {}
                chain_order.append(chain)
            rkey = (seq, icode)
            res = chains[chain].get(rkey)
            if res is None:
                res = Residue(index=-1, seq_id=seq, aa=aa3_to_canonical(resname),
                              icode=icode)
                chains[chain][rkey] = res
            if res.atom(atom_name) is None:
                res.atoms.append(Atom(atom_name, element or atom_name[:1],
                                      xyz))
        out = []
        for cid in chain_order:
            residues = [chains[cid][k] for k in sorted(chains[cid])]
            for i, r in enumerate(residues):
                r.index = i
            if residues:
                out.append(Chain(id=cid, residues=residues))
        if not out:
            raise EmptyStructureError(
                f"{self.entry_id or 'structure'}: no polymer chains found")
        return Structure(id=self.entry_id, chains=out,
                         resolution=self.resolution, method=self.method)


def _parse_pdb(text: str) -> Structure:
    b = _Builder("")
    in_model = 0
    for line_no, line in enumerate(text.splitlines(), 1):
        rec = line[:6]
        if rec == "HEADER":
            b.entry_id = line[62:66].strip() or b.entry_id
        elif rec == "EXPDTA":
            b.method = line[10:].strip() or b.method
        elif rec.startswith("REMARK") and line[6:10].strip() == "2":
            part = line[10:].strip()
            if part.startswith("RESOLUTION.") and "ANGSTROM" in part:
                try:
                    b.resolution = float(part.split()[1])
                except (IndexError, ValueError):
                    pass
        elif rec == "MODEL ":
            in_model += 1
            if in_model > 1:
                break
        elif rec == "ENDMDL":
            break
        elif rec in ("ATOM  ", "HETATM"):
            if len(line) < 54:
                raise ParseError(f"line {line_no}: truncated atom record: {line!r}")
            try:
                xyz = np.array([float(line[30:38]), float(line[38:46]),
                                float(line[46:54])])
                seq = int(line[22:26])
            except ValueError as exc:
                raise ParseError(f"line {line_no}: {exc}: {line!r}") from None
            occ = 1.0
            if len(line) >= 60 and line[54:60].strip():
                try:
                    occ = float(line[54:60])
                except ValueError:
                    pass
            element = line[76:78].strip() if len(line) >= 78 else ""
            b.add(chain=line[21].strip() or "A", seq=seq,
                  icode=line[26].strip(), resname=line[17:20],
                  atom_name=line[12:16].strip(), altloc=line[16].strip(),
                  occ=occ, element=element, xyz=xyz, line_no=line_no, line=line)
    return b.build()


# --- mmCIF ---


def _cif_tokens(text: str):
    """Yield (line_no, token) including loop_/data_ keywords."""
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith(";"):
            block = [line[1:]]
            i += 1
            while i < len(lines) and not lines[i].startswith(";"):
                block.append(lines[i])
                i += 1
            if i >= len(lines):
                raise ParseError(f"line {len(lines)}: unterminated ';' block")
            yield i + 1, "\n".join(block)
            i += 1
            continue
        pos = 0
        n = len(line)
        while pos < n:
            ch = line[pos]
            if ch in " \t":
                pos += 1
                continue
            if ch == "#":
                break
            if ch in "'\"":
                end = line.find(ch, pos + 1)
                while end != -1 and end + 1 < n and line[end + 1] not in " \t":
                    end = line.find(ch, end + 1)
                if end == -1:
                    raise ParseError(f"line {i + 1}: unterminated quote: {line!r}")
                yield i + 1, line[pos + 1:end]
                pos = end + 1
            else:
                end = pos
                while end < n and line[end] not in " \t":
                    end += 1
                yield i + 1, line[pos:end]
                pos = end
        i += 1


def _parse_cif_tables(text: str) -> tuple[str, dict[str, dict[str, list]]]:
    """Collect category -> {item -> column} for all loops and key-value pairs."""
    tables: dict[str, dict[str, list]] = {}
    block_name = ""
    toks = list(_cif_tokens(text))
    i = 0

    def is_tag(tok: str) -> bool:
        return tok.startswith("_")

    while i < len(toks):
        line_no, tok = toks[i]
        low = tok.lower()
        if low.startswith("data_"):
            if not block_name:
                block_name = tok[5:]
            i += 1
        elif low == "loop_":
            i += 1
            names = []
            while i < len(toks) and is_tag(toks[i][1]):
                names.append(toks[i][1])
                i += 1
            if not names:
                raise ParseError(f"line {line_no}: loop_ without item names")
            values = []
            while i < len(toks):
                t = toks[i][1]
                tl = t.lower()
                if is_tag(t) or tl == "loop_" or tl.startswith("data_") \
                        or tl.startswith("save_"):
                    break
                values.append(t)
                i += 1
            if len(values) % len(names):
                raise ParseError(
                    f"line {line_no}: loop with {len(names)} items has "
                    f"{len(values)} values (not a multiple)")
            for k, name in enumerate(names):
                cat, _, item = name.partition(".")
                col = values[k::len(names)]
                tables.setdefault(cat, {})[item] = col
        elif is_tag(tok):
            if i + 1 >= len(toks):
                raise ParseError(f"line {line_no}: item {tok} has no value")
            cat, _, item = tok.partition(".")
            tables.setdefault(cat, {})[item] = [toks[i + 1][1]]
            i += 2
        else:
            i += 1
    return block_name, tables


def _cif_value(v: str | None) -> str | None:
    return None if v in (None, ".", "?") else v


def _parse_mmcif(text: str) -> Structure:
    block_name, tables = _parse_cif_tables(text)
    site = tables.get("_atom_site")
    if not site:
        raise EmptyStructureError("mmCIF: no _atom_site records")
    entry = tables.get("_entry", {}).get("id", [None])[0]
    b = _Builder(_cif_value(entry) or block_name)
    exptl = tables.get("_exptl", {}).get("method", [None])[0]
    b.method = _cif_value(exptl)
    for cat, item in (("_refine", "ls_d_res_high"),
                      ("_em_3d_reconstruction", "resolution")):
        raw = _cif_value(tables.get(cat, {}).get(item, [None])[0])
        if raw:
            try:
                b.resolution = float(raw)
                break
            except ValueError:
                pass

    def col(item, alt=None):
        c = site.get(item)
        if c is None and alt is not None:
            c = site.get(alt)
        return c

    n_rows = len(next(iter(site.values())))
    group = col("group_PDB") or ["ATOM"] * n_rows
    atom_id = col("label_atom_id", "auth_atom_id")
    comp = col("label_comp_id", "auth_comp_id")
    asym = col("auth_asym_id", "label_asym_id")
    seq = col("auth_seq_id", "label_seq_id")
    icode = col("pdbx_PDB_ins_code")
    alt = col("label_alt_id")
    xs, ys, zs = col("Cartn_x"), col("Cartn_y"), col("Cartn_z")
    occ = col("occupancy")
    elem = col("type_symbol")
    model = col("pdbx_PDB_model_num")
    for need, name in ((atom_id, "label_atom_id"), (comp, "label_comp_id"),
                       (asym, "asym_id"), (seq, "seq_id"),
                       (xs, "Cartn_x"), (ys, "Cartn_y"), (zs, "Cartn_z")):
        if need is None:
            raise ParseError(f"mmCIF _atom_site missing {name}")
    first_model = _cif_value(model[0]) if model else None
    for r in range(n_rows):
        if model and _cif_value(model[r]) != first_model:
            continue
        seq_raw = _cif_value(seq[r])
        if seq_raw is None:
            continue
        try:
            xyz = np.array([float(xs[r]), float(ys[r]), float(zs[r])])
            seq_no = int(seq_raw)
        except ValueError as exc:
            raise ParseError(f"_atom_site row {r + 1}: {exc}") from None
        occ_v = 1.0
        if occ is not None and _cif_value(occ[r]) is not None:
            try:
                occ_v = float(occ[r])
            except ValueError:
                pass
        b.add(chain=_cif_value(asym[r]) or "A", seq=seq_no,
              icode=_cif_value(icode[r]) or "" if icode else "",
              resname=comp[r], atom_name=atom_id[r],
              altloc=_cif_value(alt[r]) or "" if alt else "",
              occ=occ_v, element=_cif_value(elem[r]) or "" if elem else "",
              xyz=xyz, line_no=r + 1, line=f"_atom_site row {r + 1}")
    return b.build()


# ---------------------------------------------------------------------------
# chain filter


def filter_chain(chain: Chain, min_len: int = 20, max_len: int = 500,
                 max_unk_frac: float = 0.10,
                 max_single_aa_frac: float = 0.50) -> tuple[bool, list[str]]:
    """Length / unknown-fraction / composition gate for design chains.

    Accepts chains of min_len..max_len residues (inclusive) whose UNK
    fraction is strictly below max_unk_frac and whose most common amino
    acid does not exceed max_single_aa_frac.
    """
    reasons = []
    n = len(chain)
    if n < min_len:
        reasons.append("min_len")
    if n > max_len:
        reasons.append("max_len")
    if n:
        unk = sum(1 for r in chain.residues if r.aa == UNK_AA)
        if unk / n >= max_unk_frac:
            reasons.append("max_unk_frac")
        counts: dict[str, int] = {}
        for r in chain.residues:
            if r.aa != UNK_AA:
                counts[r.aa] = counts.get(r.aa, 0) + 1
        if counts and max(counts.values()) / n > max_single_aa_frac:
            reasons.append("max_single_aa_frac")
    return (not reasons, reasons)


# ---------------------------------------------------------------------------
# pseudo-Cbeta

_CB_A = -0.58273431
_CB_B = 0.56802827
_CB_C = -0.54067466


def pseudo_cbeta(residue: Residue) -> np.ndarray:
    """Ideal-geometry Cbeta from the N-CA-C frame (defined for GLY too)."""
    n = residue.coord("N")
    ca = residue.coord("CA")
    c = residue.coord("C")
    if n is None or ca is None or c is None:
        raise FrameError(
            f"residue {residue.seq_id}: backbone atom missing for Cbeta frame")
    b = ca - n
    c_vec = c - ca
    a = np.cross(b, c_vec)
    return _CB_A * a + _CB_B * b + _CB_C * c_vec + ca


# ---------------------------------------------------------------------------
# JSON dump (documented debug format; round-trips losslessly)


def structure_to_json(s: Structure) -> dict:
    return {
        "id": s.id,
        "resolution": s.resolution,
        "method": s.method,
        "chains": [
            {
                "id": c.id,
                "role": c.role,
                "residues": [
                    {
                        "index": r.index,
                        "seq_id": r.seq_id,
                        "icode": r.icode,
                        "aa": r.aa,
                        "atoms": [
                            {
                                "name": a.name,
                                "element": a.element,
                                "pos": [float(v) for v in a.pos],
                                "resolved": bool(a.resolved),
                            }
                            for a in r.atoms
                        ],
                    }
                    for r in c.residues
                ],
            }
            for c in s.chains
        ],
    }


def structure_from_json(doc: dict) -> Structure:
    chains = []
    for cd in doc["chains"]:
        residues = []
        for rd in cd["residues"]:
            atoms = [Atom(ad["name"], ad["element"],
                          np.asarray(ad["pos"], dtype=np.float64),
                          ad["resolved"]) for ad in rd["atoms"]]
            residues.append(Residue(index=rd["index"], seq_id=rd["seq_id"],
                                    aa=rd["aa"], atoms=atoms,
                                    icode=rd.get("icode", "")))
        chains.append(Chain(id=cd["id"], residues=residues,
                            role=cd.get("role", "context")))
    return Structure(id=doc["id"], chains=chains,
                     resolution=doc.get("resolution"),
                     method=doc.get("method"))


def dump_structure_json(s: Structure) -> str:
    """Deterministic JSON text (sorted keys, round-trip float repr)."""
    return json.dumps(structure_to_json(s), sort_keys=True, indent=1)


def set_roles(s: Structure, design_chains=(), target_chains=()) -> None:
    """Assign design/target/context roles by chain id.

    Without an explicit target list every non-design chain is a target.
    """
    design = set(design_chains)
    target = set(target_chains)
    for c in s.chains:
        if c.id in design:
            c.role = "design"
        elif not target or c.id in target:
            c.role = "target"
        else:
            c.role = "context"
