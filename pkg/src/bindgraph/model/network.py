"""Encoder-decoder assembly over the residue and atom graphs.

Stage wiring: an atom-level invariant attention encoder refines residue
states from side-chain context, a gated graph-attention encoder propagates
along the k-NN residue graph, and a pair-biased causal transformer decodes
amino acids.  The encoder never sees design-position tokens (they are
replaced by the mask token), and the decoder's attention mask lets a design
position read only non-design rows and design rows earlier in the decoding
order -- never itself -- so one teacher-forced pass yields exact
autoregressive conditionals.  Target/context rows never read design tokens,
which keeps their states prefix-independent.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import tensor_core as tc
from ..container import read_tensors, write_tensors
from ..constants import MASK_TOKEN, RESIDUE_VOCAB, ATOM_VOCAB
from ..featurizer import AtomGraph, RbfSpec, ResidueGraph
from ..structure_io import Structure
from ..tensor_core import ContractError, Tensor
from .layers import gat_layer, linear, mlp2, pair_bias_attention, egat_layer

N_ROLES = 3
N_OFFSET_CLASSES = 65


@dataclass
class ModelConfig:
    atom_layers: int = 2
    residue_layers: int = 3
    decoder_layers: int = 3
    hidden: int = 128
    heads: int = 4
    dropout: float = 0.0
    vocab: int = RESIDUE_VOCAB
    sigma: float = 0.0            # backbone coordinate noise, Angstrom
    leaky_slope: float = 0.2
    rbf_bins: int = 16

    def __post_init__(self):
        if min(self.atom_layers, self.residue_layers, self.decoder_layers) < 0 \
                or self.hidden <= 0 or self.heads <= 0 or self.vocab <= 0:
            raise ValueError("config dimensions must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    @property
    def rbf(self) -> RbfSpec:
        return RbfSpec(n_bins=self.rbf_bins)


@dataclass
class DecodingOrder:
    """Permutation of design node indices plus the derived causal rank."""

    perm: np.ndarray              # (L,) global node indices, decode order
    n_nodes: int

    def __post_init__(self):
        self.perm = np.asarray(self.perm, dtype=np.int64)
        if len(np.unique(self.perm)) != len(self.perm):
            raise ContractError("decoding order is not a permutation")

    @property
    def rank(self) -> np.ndarray:
        r = np.full(self.n_nodes, -1, dtype=np.int64)
        r[self.perm] = np.arange(len(self.perm))
        return r

    def attention_mask(self, design_mask: np.ndarray) -> np.ndarray:
        """(N,N) mask: row i may attend column j.

        Non-design columns are always visible.  Design columns are visible
        only to design rows strictly later in the decoding order; no row
        ever reads its own (or a future) design token.
        """
        design_mask = np.asarray(design_mask, dtype=bool)
        if sorted(self.perm.tolist()) != list(np.nonzero(design_mask)[0]):
            raise ContractError("order does not cover the design positions")
        rank = self.rank
        earlier = (rank[None, :] >= 0) & (rank[None, :] < rank[:, None])
        return ~design_mask[None, :] | (design_mask[:, None]
                                        & design_mask[None, :] & earlier)


def sample_order(design_mask: np.ndarray, seed: int,
                 left_to_right: bool = False) -> DecodingOrder:
    """Uniformly random decoding order over design positions (seedable)."""
    design_idx = np.nonzero(np.asarray(design_mask, dtype=bool))[0]
    if left_to_right:
        perm = design_idx
    else:
        rng = np.random.Generator(np.random.Philox(key=seed))
        perm = rng.permutation(design_idx)
    return DecodingOrder(perm=perm, n_nodes=len(design_mask))


# ---------------------------------------------------------------------------
# parameter initialization


def _xavier(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class _Init:
    def __init__(self, seed: int):
        self.rng = np.random.Generator(np.random.Philox(key=seed))
        self.params: dict[str, Tensor] = {}

    def lin(self, name, fan_in, fan_out, bias=True):
        self.params[f"{name}/W"] = Tensor(_xavier(self.rng, fan_in, fan_out),
                                          requires_grad=True)
        if bias:
            self.params[f"{name}/b"] = Tensor(np.zeros(fan_out),
                                              requires_grad=True)

    def gate(self, name, fan_in, fan_out):
        # near-closed sigmoid gate: small weights, bias -3 (sigmoid ~ 0.047)
        self.params[f"{name}/W"] = Tensor(
            self.rng.normal(0.0, 1e-2, size=(fan_in, fan_out)),
            requires_grad=True)
        self.params[f"{name}/b"] = Tensor(np.full(fan_out, -3.0),
                                          requires_grad=True)

    def zeros(self, name, fan_in, fan_out, bias=True):
        self.params[f"{name}/W"] = Tensor(np.zeros((fan_in, fan_out)),
                                          requires_grad=True)
        if bias:
            self.params[f"{name}/b"] = Tensor(np.zeros(fan_out),
                                              requires_grad=True)

    def mat(self, name, fan_in, fan_out):
        self.params[name] = Tensor(_xavier(self.rng, fan_in, fan_out),
                                   requires_grad=True)

    def vec(self, name, fan_in, fan_out=None):
        shape = (fan_in,) if fan_out is None else (fan_in, fan_out)
        self.params[name] = Tensor(self.rng.normal(0.0, 1.0 / np.sqrt(fan_in),
                                                   size=shape),
                                   requires_grad=True)

    def norm(self, name, dim):
        self.params[f"{name}/g"] = Tensor(np.ones(dim), requires_grad=True)
        self.params[f"{name}/b"] = Tensor(np.zeros(dim), requires_grad=True)


def residue_edge_dim(cfg: ModelConfig) -> int:
    d = cfg.rbf_bins
    return 25 * d + 25 + N_OFFSET_CLASSES + 1 + 15 + 32 * d


def atom_edge_dim(cfg: ModelConfig) -> int:
    return cfg.rbf_bins + 1 + N_OFFSET_CLASSES + 1


def pair_feat_dim(cfg: ModelConfig) -> int:
    return cfg.rbf_bins + N_OFFSET_CLASSES + 1


def init_params(cfg: ModelConfig, seed: int = 0) -> dict[str, Tensor]:
    h = cfg.hidden
    ini = _Init(seed)
    ini.lin("enc_embed", cfg.vocab, h, bias=False)
    ini.lin("role_embed", N_ROLES, h, bias=False)
    ini.lin("dec_embed", cfg.vocab, h, bias=False)

    atom_node_dim = ATOM_VOCAB + cfg.vocab + 1
    ini.lin("atom_in", atom_node_dim, h)
    for l in range(cfg.atom_layers):
        pre = f"atom{l}"
        ini.lin(f"{pre}/msg", 2 * h + 1 + atom_edge_dim(cfg), h)
        ini.mat(f"{pre}/w_q", h, h)
        ini.mat(f"{pre}/w_k", h, h)
        ini.mat(f"{pre}/w_e", h, h)
        ini.vec(f"{pre}/w_a", h, cfg.heads)
        ini.lin(f"{pre}/value", 2 * h + 1 + atom_edge_dim(cfg), h)
        ini.lin(f"{pre}/out", 2 * h, h)

    ini.lin("edge_in", residue_edge_dim(cfg), h)
    for l in range(cfg.residue_layers):
        pre = f"res{l}"
        ini.lin(f"{pre}/edge_proj", h, h)
        ini.mat(f"{pre}/w_src", h, h)
        ini.mat(f"{pre}/w_tgt", h, h)
        ini.lin(f"{pre}/msg_mlp/0", h, h)
        ini.lin(f"{pre}/msg_mlp/1", h, h)
        ini.gate(f"{pre}/gate_pool", h, h)
        ini.zeros(f"{pre}/out_pool", h, h)
        ini.lin(f"{pre}/attn_hidden", h, h)
        ini.vec(f"{pre}/w_a", h)
        ini.lin(f"{pre}/value", h, h)
        ini.gate(f"{pre}/gate_attn", h, h)
        ini.zeros(f"{pre}/out_attn", h, h)
        ini.lin(f"{pre}/node_mlp/0", h, h)
        ini.lin(f"{pre}/node_mlp/1", h, h)

    for l in range(cfg.decoder_layers):
        pre = f"dec{l}"
        ini.norm(f"{pre}/ln1", h)
        ini.lin(f"{pre}/q", h, h)
        ini.lin(f"{pre}/kv", h, 2 * h)
        ini.lin(f"{pre}/bias", pair_feat_dim(cfg), cfg.heads)
        ini.gate(f"{pre}/gate", h, h)
        ini.lin(f"{pre}/out", h, h)
        ini.norm(f"{pre}/ln2", h)
        ini.lin(f"{pre}/ffn/0", h, 2 * h)
        ini.lin(f"{pre}/ffn/1", 2 * h, h)

    ini.norm("out_ln", h)
    ini.lin("out_head", h, cfg.vocab)
    ini.lin("edge_head", 2 * h, cfg.vocab * cfg.vocab)
    return ini.params


# ---------------------------------------------------------------------------
# forward


def _layer_norm(params, prefix, x):
    return tc.layer_norm(x, params[f"{prefix}/g"], params[f"{prefix}/b"])


def _onehot(classes: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(classes.shape + (n,))
    np.put_along_axis(out, classes[..., None], 1.0, axis=-1)
    return out


def _pair_features(rg: ResidueGraph, cfg: ModelConfig) -> np.ndarray:
    """Dense (N,N,P) invariant pair features for the decoder bias."""
    n = rg.n_residues
    d = np.linalg.norm(rg.ca[:, None] - rg.ca[None, :], axis=-1)
    rbf = cfg.rbf.encode(d)
    chain = rg.chain_index
    same = chain[:, None] == chain[None, :]
    # flatten-order offsets match within a chain; cross-chain class 64
    pos = np.arange(n)
    off = np.where(same, np.clip(pos[None, :] - pos[:, None], -32, 32) + 32, 64)
    return np.concatenate([rbf, _onehot(off, N_OFFSET_CLASSES),
                           same[:, :, None].astype(np.float64)], axis=-1)


@dataclass
class ForwardOutput:
    logits: Tensor                # (N_design, vocab) in node-index order
    design_idx: np.ndarray        # (N_design,) global node indices
    all_logits: Tensor            # (N, vocab)
    state: Tensor                 # (N, hidden) final decoder states
    edge_logits: Tensor | None = None
    edge_labels: np.ndarray | None = None


def forward(rg: ResidueGraph, ag: AtomGraph, tokens: np.ndarray,
            order: DecodingOrder, params: dict, cfg: ModelConfig,
            dropout_seed: int = 0, want_edge_logits: bool = False,
            edge_label_tokens: np.ndarray | None = None) -> ForwardOutput:
    """Teacher-forced forward pass.

    `tokens` holds already-decoded design tokens (mask elsewhere) plus the
    visible target/context sequence.  Logits at a design position depend
    only on structure, non-design sequence, and design tokens earlier in
    `order`; feeding the full native sequence therefore yields the exact
    per-position autoregressive conditionals in one pass.
    """
    n = rg.n_residues
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.shape != (n,):
        raise ContractError(f"tokens shape {tokens.shape} != ({n},)")
    design = rg.design_mask
    drop = cfg.dropout

    enc_tokens = np.where(design, MASK_TOKEN, tokens)
    s = tc.add(tc.gather(params["enc_embed/W"], enc_tokens),
               tc.gather(params["role_embed/W"], rg.chain_role))

    # ---- atom-level encoder
    if cfg.atom_layers:
        node_feats = np.concatenate([ag.node_feats["atom_type"],
                                     ag.node_feats["residue_type"],
                                     ag.node_feats["atom_exists"]], axis=-1)
        k_atoms = linear(params, "atom_in", Tensor(node_feats))
        e_atom = Tensor(np.concatenate(
            [ag.edge_feats["rbf"], ag.edge_feats["dist"],
             _onehot(ag.edge_feats["res_offset"], N_OFFSET_CLASSES),
             ag.edge_feats["same_chain"]], axis=-1))
        for l in range(cfg.atom_layers):
            s = egat_layer(s, k_atoms, rg.ca, ag.atom_pos, ag.neighbor_index,
                           ag.neighbor_mask, e_atom, params, f"atom{l}",
                           cfg.heads, cfg.leaky_slope)

    # ---- residue-level encoder
    ef = rg.edge_feats
    p_raw = np.concatenate(
        [ef["core_rbf"], ef["core_inv_dist"],
         _onehot(ef["rel_index"], N_OFFSET_CLASSES),
         ef["same_chain"][:, :, None], ef["frame_rel_pos"],
         ef["cbeta_sidechain_rbf"]], axis=-1)
    p = linear(params, "edge_in", Tensor(p_raw))
    for l in range(cfg.residue_layers):
        s = gat_layer(s, p, rg.neighbor_index, rg.neighbor_mask, params,
                      f"res{l}", drop, (dropout_seed, 10 + l), cfg.leaky_slope)

    # ---- causal decoder
    attn_mask = order.attention_mask(design)
    pair = Tensor(_pair_features(rg, cfg))
    tok = tc.gather(params["dec_embed/W"], tokens)
    for l in range(cfg.decoder_layers):
        h = _layer_norm(params, f"dec{l}/ln1", s)
        att = pair_bias_attention(h, pair, attn_mask, params, f"dec{l}",
                                  cfg.heads, s_kv=tc.add(h, tok))
        s = tc.add(s, tc.dropout(att, drop, (dropout_seed, 100 + 2 * l)))
        ffn = mlp2(params, f"dec{l}/ffn",
                   _layer_norm(params, f"dec{l}/ln2", s), cfg.leaky_slope)
        s = tc.add(s, tc.dropout(ffn, drop, (dropout_seed, 101 + 2 * l)))

    final = _layer_norm(params, "out_ln", s)
    all_logits = linear(params, "out_head", final)
    design_idx = np.nonzero(design)[0]
    logits = tc.gather(all_logits, design_idx)

    edge_logits = edge_labels = None
    if want_edge_logits:
        labels = tokens if edge_label_tokens is None else edge_label_tokens
        src_design = design[:, None] & rg.neighbor_mask
        recv, slot = np.nonzero(src_design)
        nbr = rg.neighbor_index[recv, slot]
        pair_state = tc.concat([tc.gather(final, recv),
                                tc.gather(final, nbr)], axis=-1)
        edge_logits = linear(params, "edge_head", pair_state)
        edge_labels = labels[recv] * cfg.vocab + labels[nbr]
    return ForwardOutput(logits=logits, design_idx=design_idx,
                         all_logits=all_logits, state=final,
                         edge_logits=edge_logits, edge_labels=edge_labels)


# ---------------------------------------------------------------------------
# losses


def cross_entropy_rows(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Per-row CE: -log softmax(logits)[label]."""
    v = logits.shape[-1]
    logp = tc.log_softmax(logits, axis=-1)
    onehot = _onehot(np.asarray(labels, dtype=np.int64), v)
    return tc.mul(tc.sum_(tc.mul(logp, Tensor(onehot)), axis=-1), Tensor(-1.0))


def loss(logits: Tensor, labels: np.ndarray,
         masks: dict[str, tuple[np.ndarray, float]],
         edge_logits: Tensor | None = None,
         edge_labels: np.ndarray | None = None,
         lambda_edge: float = 1.0) -> Tensor:
    """Weighted nodewise CE over named masks plus edgewise CE.

    total = sum_m w_m * mean_{i in mask_m} CE_i + lambda_edge * mean_e CE_e.
    Empty masks contribute zero.
    """
    ce = cross_entropy_rows(logits, labels)
    total = Tensor(0.0)
    for _name, (mask, weight) in sorted(masks.items()):
        mask = np.asarray(mask, dtype=bool)
        count = int(mask.sum())
        if count == 0:
            continue
        term = tc.sum_(tc.mul(ce, Tensor(mask.astype(np.float64))))
        total = tc.add(total, tc.mul(term, Tensor(weight / count)))
    if edge_logits is not None and lambda_edge != 0.0 \
            and edge_logits.shape[0] > 0:
        edge_ce = tc.mean(cross_entropy_rows(edge_logits, edge_labels))
        total = tc.add(total, tc.mul(edge_ce, Tensor(float(lambda_edge))))
    return total


# ---------------------------------------------------------------------------
# coordinate noise


def add_coordinate_noise(s: Structure, sigma: float, seed: int) -> Structure:
    """I.i.d. Gaussian displacement of every resolved heavy atom."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    out = copy.deepcopy(s)
    if sigma == 0:
        return out
    rng = np.random.Generator(np.random.Philox(key=seed))
    for chain in out.chains:
        for res in chain.residues:
            for atom in res.atoms:
                if atom.resolved:
                    atom.pos = atom.pos + rng.normal(0.0, sigma, size=3)
    return out


# ---------------------------------------------------------------------------
# weight files: tensor container + JSON manifest of names and config


def save_weights(path, params: dict[str, Tensor], cfg: ModelConfig) -> None:
    write_tensors(path, {k: v.data for k, v in params.items()})
    manifest = {"config": asdict(cfg), "params": sorted(params)}
    with open(str(path) + ".json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def load_weights(path) -> tuple[dict[str, Tensor], ModelConfig]:
    tensors = read_tensors(path)
    with open(str(path) + ".json") as fh:
        manifest = json.load(fh)
    cfg = ModelConfig(**manifest["config"])
    params = {k: Tensor(np.asarray(v, dtype=np.float64), requires_grad=True)
              for k, v in tensors.items()}
    missing = set(manifest["params"]) - set(params)
    if missing:
        raise ValueError(f"weight file missing tensors: {sorted(missing)}")
    return params, cfg
