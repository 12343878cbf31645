"""Graph layers: gated graph attention, pair-biased global attention,
invariant all-atom attention, and max-pooling frame convolution.

All layers work on the fixed-K padded neighbor layout produced by the
featurizer.  Masked softmax uses a -1e9 fill; the exponential underflows to
exact zeros, so padded or causally hidden neighbors contribute nothing and
fully masked rows yield exact zero branch outputs.
"""

from __future__ import annotations

import numpy as np

from .. import tensor_core as tc
from ..tensor_core import Tensor


def linear(params: dict, prefix: str, x: Tensor) -> Tensor:
    y = tc.matmul(x, params[f"{prefix}/W"])
    b = params.get(f"{prefix}/b")
    return tc.add(y, b) if b is not None else y


def mlp2(params: dict, prefix: str, x: Tensor, slope: float = 0.2) -> Tensor:
    h = tc.leaky_relu(linear(params, prefix + "/0", x), slope)
    return linear(params, prefix + "/1", h)


def _tile_rows(x: Tensor, n: int, k: int) -> Tensor:
    """(n,F) -> (n,k,F) by repeating each row k times (gradient-correct)."""
    idx = np.repeat(np.arange(n)[:, None], k, axis=1)
    return tc.gather(x, idx)


def _masked_softmax(scores: Tensor, mask: np.ndarray, axis: int) -> Tensor:
    """Softmax over `axis` with invalid entries removed exactly.

    Rows with no valid entry come out all-zero rather than uniform.
    """
    filled = tc.masked_fill(scores, mask, -1e9)
    return tc.mul(tc.softmax(filled, axis=axis), Tensor(mask.astype(np.float64)))


def gat_layer(s: Tensor, p: Tensor, neighbor_idx: np.ndarray,
              mask: np.ndarray, params: dict, prefix: str,
              dropout_p: float = 0.0, dropout_seed=0,
              slope: float = 0.2) -> Tensor:
    """Gated graph-attention update over a (N,K) neighbor layout.

    Edge messages combine projected edge features with gathered neighbor
    projections and the receiving node's projection, refined by an MLP.
    A gated mean-pool branch and a gated attention branch feed two residual
    updates.  `mask` marks valid (and causally visible) edges; rows with no
    valid neighbor receive zero from both branches.
    """
    n, k = neighbor_idx.shape
    safe = np.where(mask, neighbor_idx, 0)

    src = tc.gather(tc.matmul(s, params[f"{prefix}/w_src"]), safe)
    tgt = tc.reshape(tc.matmul(s, params[f"{prefix}/w_tgt"]), (n, 1, -1))
    m = tc.add(tc.add(linear(params, f"{prefix}/edge_proj", p), src), tgt)
    m = mlp2(params, f"{prefix}/msg_mlp", m, slope)

    # global mean-pool branch, sigmoid-gated
    mask_f = mask.astype(np.float64)
    counts = np.maximum(mask_f.sum(axis=1), 1.0)
    pooled = tc.sum_(tc.mul(m, Tensor(mask_f[:, :, None])), axis=1)
    pooled = tc.mul(pooled, Tensor(1.0 / counts[:, None]))
    gate_pool = tc.sigmoid(linear(params, f"{prefix}/gate_pool", s))
    delta = linear(params, f"{prefix}/out_pool", tc.mul(gate_pool, pooled))

    # graph-attention branch, sigmoid-gated
    scores = tc.matmul(tc.leaky_relu(linear(params, f"{prefix}/attn_hidden", m),
                                     slope),
                       params[f"{prefix}/w_a"])
    alpha = _masked_softmax(scores, mask, axis=1)
    v = linear(params, f"{prefix}/value", m)
    o_gat = tc.sum_(tc.mul(tc.reshape(alpha, (n, k, 1)), v), axis=1)
    gate_attn = tc.sigmoid(linear(params, f"{prefix}/gate_attn", s))
    delta = tc.add(delta, linear(params, f"{prefix}/out_attn",
                                 tc.mul(gate_attn, o_gat)))

    s = tc.add(s, tc.dropout(delta, dropout_p, (dropout_seed, 0)))
    s = tc.add(s, tc.dropout(mlp2(params, f"{prefix}/node_mlp", s, slope),
                             dropout_p, (dropout_seed, 1)))
    return s


def pair_bias_attention(s: Tensor, p: Tensor, mask: np.ndarray, params: dict,
                        prefix: str, n_heads: int,
                        s_kv: Tensor | None = None) -> Tensor:
    """Scaled dot-product attention with per-head pairwise biases.

    A_ij = Q_i.K_j/sqrt(d) + B_ij, masked entries suppressed, output gated
    by sigmoid(Linear(s_i)) then projected.  `s_kv` optionally supplies a
    separate key/value stream (the decoder injects token embeddings there);
    it defaults to s.
    """
    n, hidden = s.shape
    if hidden % n_heads:
        raise tc.DimensionError(f"hidden {hidden} not divisible by {n_heads} heads")
    dh = hidden // n_heads
    kv_in = s if s_kv is None else s_kv

    q = tc.transpose(tc.reshape(linear(params, f"{prefix}/q", s),
                                (n, n_heads, dh)), (1, 0, 2))
    kv = linear(params, f"{prefix}/kv", kv_in)
    k = tc.transpose(tc.reshape(tc.narrow(kv, -1, 0, hidden),
                                (n, n_heads, dh)), (1, 0, 2))
    v = tc.transpose(tc.reshape(tc.narrow(kv, -1, hidden, hidden),
                                (n, n_heads, dh)), (1, 0, 2))
    bias = tc.transpose(linear(params, f"{prefix}/bias", p), (2, 0, 1))

    logits = tc.add(tc.mul(tc.matmul(q, tc.transpose(k, (0, 2, 1))),
                           Tensor(1.0 / np.sqrt(dh))), bias)
    alpha = _masked_softmax(logits, mask[None, :, :], axis=-1)
    o = tc.matmul(alpha, v)                               # (H, N, dh)
    o = tc.reshape(tc.transpose(o, (1, 0, 2)), (n, hidden))
    o = tc.mul(tc.sigmoid(linear(params, f"{prefix}/gate", s)), o)
    return linear(params, f"{prefix}/out", o)


def egat_layer(q: Tensor, k: Tensor, x: np.ndarray, y: np.ndarray,
               neighbor_idx: np.ndarray, mask: np.ndarray, e: Tensor,
               params: dict, prefix: str, n_heads: int,
               slope: float = 0.2) -> Tensor:
    """Invariant all-atom attention from centroids to neighbor points.

    Geometry enters only as the squared distance ||y_j - x_i||^2, so the
    output is invariant under joint rigid motion of (x, y).  Empty
    neighborhoods aggregate to zero.
    """
    n, kk = neighbor_idx.shape
    hidden = q.shape[-1]
    dh = hidden // n_heads
    safe = np.where(mask, neighbor_idx, 0)

    z = y[safe] - x[:, None, :]
    d2 = (z ** 2).sum(axis=-1, keepdims=True) * mask[:, :, None]

    q_tile = _tile_rows(q, n, kk)
    k_j = tc.gather(k, safe)
    feats = tc.concat([q_tile, k_j, Tensor(d2), e], axis=-1)
    m = linear(params, f"{prefix}/msg", feats)

    pre = tc.add(tc.add(tc.reshape(tc.matmul(q, params[f"{prefix}/w_q"]),
                                   (n, 1, -1)),
                        tc.matmul(k_j, params[f"{prefix}/w_k"])),
                 tc.matmul(m, params[f"{prefix}/w_e"]))
    scores = tc.matmul(tc.leaky_relu(pre, slope), params[f"{prefix}/w_a"])
    alpha = _masked_softmax(scores, mask[:, :, None], axis=1)  # (N,K,H)

    v = tc.reshape(linear(params, f"{prefix}/value", feats),
                   (n, kk, n_heads, dh))
    o = tc.sum_(tc.mul(tc.reshape(alpha, (n, kk, n_heads, 1)), v), axis=1)
    o = tc.reshape(o, (n, hidden))
    return tc.add(q, linear(params, f"{prefix}/out", tc.concat([q, o], axis=-1)))


def caconv_layer(recv_feats: Tensor, nbr_feats: Tensor, edges: np.ndarray,
                 std_coords: np.ndarray, params: dict, prefix: str,
                 frame_valid: np.ndarray | None = None,
                 edge_feats: np.ndarray | None = None):
    """Max-pooling frame convolution over a directed edge list.

    Per edge (q, v): message = f([x_q || x_v || e(q,v) || p_v~]) with p_v~
    the neighbor coordinates standardized into q's local frame (precomputed
    by the featurizer).  Messages max-pool per receiver, then pass through
    the node MLP g.  Receivers with a degenerate frame or no neighbors are
    skipped: their output row is zero and their flag is False.

    Returns (updated_feats, updated_flags).
    """
    n = recv_feats.shape[0]
    if frame_valid is None:
        frame_valid = np.ones(n, dtype=bool)
    recv, nbr = edges[:, 0], edges[:, 1]
    keep = frame_valid[recv]
    recv, nbr = recv[keep], nbr[keep]
    std = std_coords[keep]
    parts = [tc.gather(recv_feats, recv), tc.gather(nbr_feats, nbr)]
    if edge_feats is not None:
        parts.append(Tensor(edge_feats[keep]))
    parts.append(Tensor(std))
    msg = mlp2(params, f"{prefix}/f", tc.concat(parts, axis=-1), slope=0.0)

    # pad edges into a (N, Dmax, F) layout for the max pool
    order = np.argsort(recv, kind="stable")
    recv_sorted = recv[order]
    degree = np.bincount(recv_sorted, minlength=n)
    dmax = int(degree.max()) if len(recv) else 0
    updated = np.zeros(n, dtype=bool)
    if dmax == 0:
        out_dim = params[f"{prefix}/g/1/W"].shape[1]
        return Tensor(np.zeros((n, out_dim))), updated
    slot = np.concatenate([np.arange(d) for d in degree if d > 0])
    flat_pos = recv_sorted * dmax + slot
    scatter_idx = np.full(n * dmax, len(recv), dtype=np.int64)
    scatter_idx[flat_pos] = order
    pad_mask = (scatter_idx < len(recv)).reshape(n, dmax)

    # append one zero row so padded slots gather a harmless constant
    msg_pad = tc.concat([msg, Tensor(np.zeros((1, msg.shape[-1])))], axis=0)
    grid = tc.gather(msg_pad, scatter_idx.reshape(n, dmax))
    grid = tc.masked_fill(grid, pad_mask[:, :, None], -1e9)
    pooled = tc.max_(grid, axis=1)

    has_nbr = degree > 0
    updated = has_nbr & frame_valid
    out = mlp2(params, f"{prefix}/g", pooled, slope=0.0)
    return tc.mul(out, Tensor(updated.astype(np.float64)[:, None])), updated
