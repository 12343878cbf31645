"""Rigid-motion-invariant graph featurization.

Two families of graphs are built here:

* the k-NN residue graph (K=48 over CA distances) and the CA-centroid atom
  radius graph (r=15 A, max 96 neighbors) with RBF/frame-relative features
  used by the sequence-design model, and
* distance-cutoff residue/atom graphs with 21-way amino-acid one-hots,
  normalized chain positions, and per-edge frame-standardized coordinates
  used by the max-pooling graph convolution stack.

Every tensor returned by ``feature_tensors()`` is invariant to global
rotations and translations; raw coordinates and frames are kept as separate
equivariant metadata for layers that consume only distances or standardized
offsets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .constants import (AA1_TO_AA3, BACKBONE_ATOMS, RESIDUE_ATOMS,
                        SIDECHAIN_SLOTS, ATOM_INDEX, ATOM_VOCAB,
                        RESIDUE_VOCAB, glinter_atom_type, token_of)
from .structure_io import FrameError, Residue, Structure, pseudo_cbeta

CORE_ATOMS = ("N", "CA", "C", "O", "pCB")
N_CORE = len(CORE_ATOMS)
ROLE_CODES = {"design": 0, "target": 1, "context": 2}


class GraphTooSmallError(ValueError):
    pass


@dataclass
class RbfSpec:
    """Gaussian radial basis bins: exp(-(d - mu_i)^2), mu in [d_min, d_max]."""

    n_bins: int = 16
    d_min: float = 2.0
    d_max: float = 22.0

    @property
    def centers(self) -> np.ndarray:
        return np.linspace(self.d_min, self.d_max, self.n_bins)

    def encode(self, d: np.ndarray) -> np.ndarray:
        """RBF-encode distances; appends a bin axis of size n_bins."""
        d = np.asarray(d, dtype=np.float64)
        return np.exp(-((d[..., None] - self.centers) ** 2))


@dataclass
class LocalFrame:
    origin: np.ndarray    # (3,)
    rotation: np.ndarray  # (3,3), columns are the x/y/z axes


def local_frame(residue: Residue) -> LocalFrame:
    """Backbone frame at CA: x along CA->C, z normal to the N-CA/CA-C plane."""
    n = residue.coord("N")
    ca = residue.coord("CA")
    c = residue.coord("C")
    if n is None or ca is None or c is None:
        raise FrameError(
            f"residue {residue.seq_id}: N/CA/C required for a local frame")
    return _frame_from_coords(n, ca, c)


def _frame_from_coords(n, ca, c) -> LocalFrame:
    x = c - ca
    nx = np.linalg.norm(x)
    zv = np.cross(ca - n, c - ca)
    nz = np.linalg.norm(zv)
    if nx < 1e-8 or nz < 1e-8:
        raise FrameError("degenerate frame: collinear N/CA/C")
    x = x / nx
    z = zv / nz
    y = np.cross(z, x)
    return LocalFrame(origin=np.array(ca, dtype=np.float64),
                      rotation=np.stack([x, y, z], axis=1))


def rbf_encode(d: float | np.ndarray, spec: RbfSpec) -> np.ndarray:
    return spec.encode(d)


# ---------------------------------------------------------------------------
# flattened per-structure arrays


@dataclass
class _Flat:
    residues: list[Residue]
    chain_index: np.ndarray    # (N,)
    res_in_chain: np.ndarray   # (N,) 0-based index within its chain
    chain_role: np.ndarray     # (N,) role codes
    tokens: np.ndarray         # (N,) residue token ids
    chain_ids: list[str]


def _flatten(s: Structure) -> _Flat:
    residues, chain_index, in_chain, roles, tokens = [], [], [], [], []
    for ci, chain in enumerate(s.chains):
        for r in chain.residues:
            residues.append(r)
            chain_index.append(ci)
            in_chain.append(r.index)
            roles.append(ROLE_CODES.get(chain.role, 2))
            tokens.append(token_of(r.aa))
    return _Flat(residues=residues,
                 chain_index=np.asarray(chain_index, dtype=np.int64),
                 res_in_chain=np.asarray(in_chain, dtype=np.int64),
                 chain_role=np.asarray(roles, dtype=np.int64),
                 tokens=np.asarray(tokens, dtype=np.int64),
                 chain_ids=[c.id for c in s.chains])


def _core_coords(flat: _Flat):
    """(N,5,3) core-atom coordinates and (N,5) exists flags.

    N/CA/C are required (the pseudo-CB frame needs them); O is optional and
    zero-filled with exists=0 when unresolved.
    """
    n = len(flat.residues)
    core = np.zeros((n, N_CORE, 3))
    exists = np.zeros((n, N_CORE), dtype=bool)
    for i, r in enumerate(flat.residues):
        for a, name in enumerate(("N", "CA", "C", "O")):
            pos = r.coord(name)
            if pos is not None:
                core[i, a] = pos
                exists[i, a] = True
        if not (exists[i, 0] and exists[i, 1] and exists[i, 2]):
            raise FrameError(
                f"residue {r.seq_id}: N/CA/C required for featurization")
        core[i, 4] = pseudo_cbeta(r)
        exists[i, 4] = True
    return core, exists


def _sidechain_slots(flat: _Flat):
    """(N,32,3) side-chain atom positions on the roster slots, plus exists."""
    n = len(flat.residues)
    pos = np.zeros((n, len(SIDECHAIN_SLOTS), 3))
    exists = np.zeros((n, len(SIDECHAIN_SLOTS)), dtype=bool)
    slot = {name: k for k, name in enumerate(SIDECHAIN_SLOTS)}
    for i, r in enumerate(flat.residues):
        for a in r.atoms:
            k = slot.get(a.name)
            if k is not None and a.resolved:
                pos[i, k] = a.pos
                exists[i, k] = True
    return pos, exists


def _rel_index_classes(flat: _Flat, idx: np.ndarray, mask: np.ndarray,
                       centroid_res: np.ndarray | None = None) -> np.ndarray:
    """Clamped +-32 sequence offsets as 65 classes; cross-chain pairs share
    the last class (64) and are disambiguated by the same-chain flag."""
    if centroid_res is None:
        centroid_res = np.arange(len(flat.residues))
    src_chain = flat.chain_index[centroid_res][:, None]
    src_pos = flat.res_in_chain[centroid_res][:, None]
    safe = np.where(mask, idx, 0)
    dst_chain = flat.chain_index[safe]
    dst_pos = flat.res_in_chain[safe]
    same = dst_chain == src_chain
    off = np.clip(dst_pos - src_pos, -32, 32) + 32
    classes = np.where(same, off, 64)
    return np.where(mask, classes, 0).astype(np.int64)


# ---------------------------------------------------------------------------
# residue k-NN graph


@dataclass
class ResidueGraph:
    n_residues: int
    k: int
    neighbor_index: np.ndarray        # (N,K) sentinel N on padding
    neighbor_mask: np.ndarray         # (N,K) bool
    edge_feats: dict[str, np.ndarray]
    tokens: np.ndarray                # (N,)
    chain_index: np.ndarray           # (N,)
    chain_role: np.ndarray            # (N,)
    design_mask: np.ndarray           # (N,) bool
    chain_ids: list[str]
    ca: np.ndarray = field(repr=False, default=None)  # (N,3) equivariant

    def feature_tensors(self) -> dict[str, np.ndarray]:
        return dict(self.edge_feats)


def build_residue_graph(s: Structure, design_mask: np.ndarray,
                        spec: RbfSpec | None = None, k: int = 48) -> ResidueGraph:
    """K-NN residue graph over CA distances with all edge feature tensors.

    design_mask marks residues whose side chains are hidden from the
    features (the chains being designed).
    """
    spec = spec or RbfSpec()
    flat = _flatten(s)
    n = len(flat.residues)
    if n < 2:
        raise GraphTooSmallError(f"need at least 2 residues, got {n}")
    design_mask = np.asarray(design_mask, dtype=bool)
    if design_mask.shape != (n,):
        raise ValueError(f"design_mask shape {design_mask.shape} != ({n},)")

    core, core_exists = _core_coords(flat)
    ca = core[:, 1]
    idx, dist, mask = kernels.knn_graph(ca, k)
    safe = np.where(mask, idx, 0)

    core_j = core[safe]                                   # (N,K,5,3)
    exists_j = core_exists[safe] & mask[:, :, None]       # (N,K,5)
    diff = core[:, None, :, None, :] - core_j[:, :, None, :, :]
    d_pair = np.linalg.norm(diff, axis=-1)                # (N,K,5,5)
    pair_valid = core_exists[:, None, :, None] & exists_j[:, :, None, :]

    rbf = spec.encode(d_pair) * pair_valid[..., None]
    inv = pair_valid / (1.0 + d_pair)

    frames = np.zeros((n, 3, 3))
    for i, r in enumerate(flat.residues):
        frames[i] = _frame_from_coords(core[i, 0], core[i, 1], core[i, 2]).rotation
    rel = core_j - ca[:, None, None, :]                   # (N,K,5,3)
    frame_rel = np.einsum("nba,nkcb->nkca", frames, rel)
    frame_rel = frame_rel * exists_j[..., None]

    sc_pos, sc_exists = _sidechain_slots(flat)
    sc_j = sc_pos[safe]                                   # (N,K,32,3)
    sc_valid = sc_exists[safe] & mask[:, :, None]
    sc_valid &= ~design_mask[safe][:, :, None]            # hide design side chains
    d_sc = np.linalg.norm(core[:, None, 4:5, :] - sc_j, axis=-1)
    sc_rbf = spec.encode(d_sc) * sc_valid[..., None]

    same_chain = (flat.chain_index[safe] == flat.chain_index[:, None]) & mask

    edge_feats = {
        "core_rbf": rbf.reshape(n, k, N_CORE * N_CORE * spec.n_bins),
        "core_inv_dist": inv.reshape(n, k, N_CORE * N_CORE),
        "rel_index": _rel_index_classes(flat, idx, mask),
        "same_chain": same_chain.astype(np.float64),
        "frame_rel_pos": frame_rel.reshape(n, k, N_CORE * 3),
        "cbeta_sidechain_rbf": sc_rbf.reshape(n, k, len(SIDECHAIN_SLOTS) * spec.n_bins),
    }
    return ResidueGraph(n_residues=n, k=k, neighbor_index=idx,
                        neighbor_mask=mask, edge_feats=edge_feats,
                        tokens=flat.tokens, chain_index=flat.chain_index,
                        chain_role=flat.chain_role, design_mask=design_mask,
                        chain_ids=flat.chain_ids, ca=ca)


# ---------------------------------------------------------------------------
# CA-centroid atom radius graph

_FAR = 1e9  # sentinel position for unresolved atoms; beyond any radius


@dataclass
class AtomGraph:
    n_atoms: int
    n_residues: int
    k_max: int
    node_feats: dict[str, np.ndarray]
    neighbor_index: np.ndarray        # (N,k_max) atom index, sentinel M
    neighbor_mask: np.ndarray         # (N,k_max)
    edge_feats: dict[str, np.ndarray]
    atom_owner: np.ndarray            # (M,) global residue index
    atom_pos: np.ndarray = field(repr=False, default=None)   # (M,3)
    centroids: np.ndarray = field(repr=False, default=None)  # (N,3)

    @property
    def n_edges(self) -> int:
        return int(self.neighbor_mask.sum())

    def edge_pairs(self) -> np.ndarray:
        """Flat (E,2) array of (residue centroid, atom) pairs."""
        src = np.repeat(np.arange(self.n_residues), self.k_max)
        flat_idx = self.neighbor_index.ravel()
        keep = self.neighbor_mask.ravel()
        return np.stack([src[keep], flat_idx[keep]], axis=1)

    def feature_tensors(self) -> dict[str, np.ndarray]:
        out = {f"node/{k}": v for k, v in self.node_feats.items()}
        out.update({f"edge/{k}": v for k, v in self.edge_feats.items()})
        return out


def build_atom_graph(s: Structure, design_mask: np.ndarray,
                     spec: RbfSpec | None = None, radius: float = 15.0,
                     k_max: int = 96) -> AtomGraph:
    """Radius graph from each CA centroid to nearby heavy atoms.

    Atom nodes follow the per-residue-type roster; design-masked residues
    contribute backbone atoms only.  Unresolved roster atoms keep a node
    with exists=0, zero-filled features, and never receive edges.
    """
    spec = spec or RbfSpec()
    flat = _flatten(s)
    n = len(flat.residues)
    design_mask = np.asarray(design_mask, dtype=bool)

    atom_token, res_token, exists, owner, pos = [], [], [], [], []
    for i, r in enumerate(flat.residues):
        roster = RESIDUE_ATOMS.get(AA1_TO_AA3.get(r.aa, "UNK"), RESIDUE_ATOMS["UNK"])
        if design_mask[i]:
            roster = [a for a in roster if a in BACKBONE_ATOMS]
        for name in roster:
            atom = r.atom(name)
            ok = atom is not None and atom.resolved
            atom_token.append(ATOM_INDEX.get(name, ATOM_VOCAB - 1))
            res_token.append(flat.tokens[i])
            exists.append(ok)
            owner.append(i)
            pos.append(atom.pos if ok else np.zeros(3))
    m = len(atom_token)
    atom_token = np.asarray(atom_token, dtype=np.int64)
    res_token = np.asarray(res_token, dtype=np.int64)
    exists = np.asarray(exists, dtype=bool)
    owner = np.asarray(owner, dtype=np.int64)
    pos = np.asarray(pos, dtype=np.float64).reshape(m, 3)

    core, _ = _core_coords(flat)
    ca = core[:, 1]
    search_pos = np.where(exists[:, None], pos, _FAR)
    idx, dist, mask = kernels.radius_graph(ca, search_pos, radius, k_max)
    safe = np.where(mask, idx, 0)

    rbf = spec.encode(np.where(mask, dist, 0.0)) * mask[:, :, None]
    euclid = (np.where(mask, dist, 0.0))[:, :, None]
    offset = _rel_index_classes(flat, owner[safe], mask)
    same_chain = (flat.chain_index[owner[safe]] == flat.chain_index[:, None]) & mask

    atom_onehot = np.zeros((m, ATOM_VOCAB))
    atom_onehot[np.arange(m), atom_token] = 1.0
    res_onehot = np.zeros((m, RESIDUE_VOCAB))
    res_onehot[np.arange(m), res_token] = 1.0

    node_feats = {
        "atom_type": atom_onehot,
        "residue_type": res_onehot,
        "atom_exists": exists.astype(np.float64)[:, None],
    }
    edge_feats = {
        "rbf": rbf,
        "dist": euclid,
        "res_offset": offset,
        "same_chain": (same_chain.astype(np.float64))[:, :, None],
    }
    return AtomGraph(n_atoms=m, n_residues=n, k_max=k_max,
                     node_feats=node_feats, neighbor_index=idx,
                     neighbor_mask=mask, edge_feats=edge_feats,
                     atom_owner=owner, atom_pos=pos, centroids=ca)


# ---------------------------------------------------------------------------
# distance-cutoff graphs with local-reference-frame standardization


@dataclass
class CutoffResidueGraph:
    n_residues: int
    node_feats: dict[str, np.ndarray]
    edges: np.ndarray                 # (E,2) directed (receiver, neighbor)
    edge_feats: dict[str, np.ndarray]
    frames: np.ndarray                # (N,3,3) equivariant metadata
    frame_valid: np.ndarray           # (N,)
    ca: np.ndarray = field(repr=False, default=None)

    def feature_tensors(self) -> dict[str, np.ndarray]:
        out = {f"node/{k}": v for k, v in self.node_feats.items()}
        out.update({f"edge/{k}": v for k, v in self.edge_feats.items()})
        return out


@dataclass
class CutoffAtomGraph:
    n_residues: int
    n_atoms: int
    node_feats: dict[str, np.ndarray]
    edges: np.ndarray                 # (E,2) (residue, atom)
    edge_feats: dict[str, np.ndarray]

    def feature_tensors(self) -> dict[str, np.ndarray]:
        out = {f"node/{k}": v for k, v in self.node_feats.items()}
        out.update({f"edge/{k}": v for k, v in self.edge_feats.items()})
        return out


def build_glinter_graphs(s: Structure, d_res: float = 8.0,
                         d_atom: float = 8.0, pssm: np.ndarray | None = None,
                         sasa: np.ndarray | None = None):
    """Distance-cutoff residue and residue-atom graphs.

    The residue graph links CA pairs within d_res; the atom graph links each
    residue's CA to heavy atoms within d_atom, carrying the same-residue
    edge-type bit.  PSSM and per-residue SASA are optional external inputs,
    zero-filled when absent.  Per-edge coordinates are standardized into the
    receiving residue's local frame, which keeps every feature tensor
    rigid-motion invariant.
    """
    flat = _flatten(s)
    n = len(flat.residues)

    ca = np.zeros((n, 3))
    frames = np.zeros((n, 3, 3))
    frame_valid = np.zeros(n, dtype=bool)
    for i, r in enumerate(flat.residues):
        pos = r.coord("CA")
        if pos is None:
            raise FrameError(f"residue {r.seq_id}: CA required")
        ca[i] = pos
        try:
            frames[i] = local_frame(r).rotation
            frame_valid[i] = True
        except FrameError:
            frames[i] = np.eye(3)

    aa21 = np.zeros((n, 21))
    for i, t in enumerate(flat.tokens):
        aa21[i, min(t, 20)] = 1.0
    chain_lengths = np.bincount(flat.chain_index,
                                minlength=len(flat.chain_ids))
    norm_pos = (flat.res_in_chain /
                chain_lengths[flat.chain_index])[:, None]
    node_feats = {
        "aa_onehot": aa21,
        "pssm": np.zeros((n, 20)) if pssm is None else np.asarray(pssm, dtype=np.float64),
        "sasa": np.zeros((n, 1)) if sasa is None else np.asarray(sasa, dtype=np.float64).reshape(n, 1),
        "norm_pos": norm_pos,
    }

    d = np.linalg.norm(ca[:, None] - ca[None, :], axis=-1)
    within = (d <= d_res) & ~np.eye(n, dtype=bool)
    recv, nb = np.nonzero(within)
    edges = np.stack([recv, nb], axis=1)
    std = np.einsum("eba,eb->ea", frames[recv], ca[nb] - ca[recv])
    std = std * frame_valid[recv][:, None]
    res_graph = CutoffResidueGraph(
        n_residues=n, node_feats=node_feats, edges=edges,
        edge_feats={"std_coords": std}, frames=frames,
        frame_valid=frame_valid, ca=ca)

    atom_pos, atom_type10, atom_res21, atom_owner = [], [], [], []
    for i, r in enumerate(flat.residues):
        for a in r.atoms:
            if not a.resolved:
                continue
            atom_pos.append(a.pos)
            t10 = np.zeros(10)
            t10[glinter_atom_type(a.name, a.element)] = 1.0
            atom_type10.append(t10)
            atom_res21.append(aa21[i])
            atom_owner.append(i)
    m = len(atom_pos)
    atom_pos = np.asarray(atom_pos).reshape(m, 3)
    atom_owner = np.asarray(atom_owner, dtype=np.int64)

    if m:
        da = np.linalg.norm(ca[:, None] - atom_pos[None, :], axis=-1)
        r_idx, a_idx = np.nonzero(da <= d_atom)
    else:
        r_idx = a_idx = np.zeros(0, dtype=np.int64)
    a_edges = np.stack([r_idx, a_idx], axis=1)
    edge_type = (atom_owner[a_idx] == r_idx).astype(np.float64)[:, None]
    a_std = np.einsum("eba,eb->ea", frames[r_idx], atom_pos[a_idx] - ca[r_idx])
    a_std = a_std * frame_valid[r_idx][:, None]
    atom_graph = CutoffAtomGraph(
        n_residues=n, n_atoms=m,
        node_feats={
            "atom_type10": np.asarray(atom_type10).reshape(m, 10),
            "residue_aa21": np.asarray(atom_res21).reshape(m, 21),
            "sasa": np.zeros((m, 1)),
        },
        edges=a_edges,
        edge_feats={"edge_type": edge_type, "std_coords": a_std})
    return res_graph, atom_graph
