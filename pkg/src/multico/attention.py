"""Multi-head attention with an optional edge term in the score function.

Scores come in two flavours. Vanilla scores are plain key/query scalar
products per head. Mixed scores add an edge-derived component to both the
key and the query vector before the product, which is how relational
features (distances, precedences, processing times) enter the model:

    S[m, n] = < K_m W_k + E_mn W'_k | Q_n W_q + E_mn W'_q > / sqrt(d)

With zero edge projections the mixed score reduces exactly to the vanilla
one, which the ablation tests rely on. The 1/sqrt(d) scaling is not part
of the score definition above and can be switched off (`scale_scores`)
to recover the unscaled variant.

Head parameters are stored packed: wq/wk/wv are (D, D) with the columns
of head h at [h*d:(h+1)*d], wo is packed the same way so that the output
reprojection of all heads is a single product with wo transposed. The
normalization axis of the attention softmax is the key index: each query
distributes one unit of weight over the keys it may attend.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass
class AttentionInputs:
    """Queries (N,D), keys/values (M,D), optional edges (M,N,Dbar) and
    optional log-binary mask (M,N)."""

    q: Tensor
    k: Tensor
    v: Tensor
    e: Optional[Tensor] = None
    mask: Optional[np.ndarray] = None


class HeadParams:
    """Packed projection matrices for all heads of one attention block.

    wq, wk, wv, wo: (D, D); weq, wek: (Dbar, D) edge projections, present
    iff the block can run in mixed mode.
    """

    def __init__(self, wq, wk, wv, wo, weq=None, wek=None, heads=1):
        dim = wq.shape[0]
        if dim % heads != 0:
            raise ValueError(f"dim {dim} not divisible by {heads} heads")
        for name, w in (("wq", wq), ("wk", wk), ("wv", wv), ("wo", wo)):
            if w.shape != (dim, dim):
                raise ValueError(f"{name}: expected {(dim, dim)}, got {w.shape}")
        if (weq is None) != (wek is None):
            raise ValueError("edge projections must be given together or not at all")
        if weq is not None and (weq.shape != wek.shape or weq.shape[1] != dim):
            raise ValueError(
                f"edge projections: expected (*, {dim}), got {weq.shape} / {wek.shape}"
            )
        self.wq, self.wk, self.wv, self.wo = wq, wk, wv, wo
        self.weq, self.wek = weq, wek
        self.heads = heads
        self.dim = dim
        self.head_dim = dim // heads

    @property
    def mixed(self) -> bool:
        return self.weq is not None

    @property
    def edge_dim(self) -> Optional[int]:
        return None if self.weq is None else self.weq.shape[0]


def _uniform(rng, fan_in, shape, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def init_head_params(store, prefix, dim, edge_dim, heads, rng, mixed=True):
    """Register fresh head parameters under `prefix` and return them."""
    dt = store.dtype
    wq = store.add(f"{prefix}.wq", _uniform(rng, dim, (dim, dim), dt))
    wk = store.add(f"{prefix}.wk", _uniform(rng, dim, (dim, dim), dt))
    wv = store.add(f"{prefix}.wv", _uniform(rng, dim, (dim, dim), dt))
    wo = store.add(f"{prefix}.wo", _uniform(rng, dim, (dim, dim), dt))
    weq = wek = None
    if mixed:
        weq = store.add(f"{prefix}.weq", _uniform(rng, edge_dim, (edge_dim, dim), dt))
        wek = store.add(f"{prefix}.wek", _uniform(rng, edge_dim, (edge_dim, dim), dt))
    return HeadParams(wq, wk, wv, wo, weq, wek, heads)


def _split_heads(x: Tensor, n_rows: int, heads: int, head_dim: int, query_side: bool):
    # (rows, D) -> (rows, 1, H, d) for keys, (1, rows, H, d) for queries
    if query_side:
        return T.reshape(x, (1, n_rows, heads, head_dim))
    return T.reshape(x, (n_rows, 1, heads, head_dim))


def vanilla_scores(inputs: AttentionInputs, head: HeadParams,
                   scale_scores: bool = True) -> Tensor:
    """Score stack (M, N, H); edges are ignored even when present."""
    m = inputs.k.shape[0]
    n = inputs.q.shape[0]
    kr = _split_heads(T.matmul(inputs.k, head.wk), m, head.heads, head.head_dim, False)
    qr = _split_heads(T.matmul(inputs.q, head.wq), n, head.heads, head.head_dim, True)
    s = T.reduce_sum(T.elementwise_mul(kr, qr), axis=-1)
    if scale_scores:
        s = T.scale(s, 1.0 / np.sqrt(head.head_dim))
    return s


def mixed_scores(inputs: AttentionInputs, head: HeadParams,
                 scale_scores: bool = True) -> Tensor:
    """Score stack (M, N, H) with the edge component added to keys and queries."""
    if not head.mixed:
        raise ValueError("mixed_scores requires edge projections")
    if inputs.e is None:
        raise ValueError("mixed_scores requires an edge tensor")
    m = inputs.k.shape[0]
    n = inputs.q.shape[0]
    ev = inputs.e
    if ev.values.ndim != 3 or ev.shape[:2] != (m, n) or ev.shape[2] != head.edge_dim:
        raise ValueError(
            f"edge tensor: expected ({m}, {n}, {head.edge_dim}), got {ev.shape}"
        )
    h, d = head.heads, head.head_dim
    kr = _split_heads(T.matmul(inputs.k, head.wk), m, h, d, False)
    qr = _split_heads(T.matmul(inputs.q, head.wq), n, h, d, True)
    ek = T.reshape(T.matmul(ev, head.wek), (m, n, h, d))
    eq = T.reshape(T.matmul(ev, head.weq), (m, n, h, d))
    s = T.reduce_sum(T.elementwise_mul(T.add(kr, ek), T.add(qr, eq)), axis=-1)
    if scale_scores:
        s = T.scale(s, 1.0 / np.sqrt(d))
    return s


def attention_forward(inputs: AttentionInputs, head: HeadParams, mode: str,
                      scale_scores: bool = True) -> Tensor:
    """Full block: scores -> key-axis softmax -> value mix -> output (N, D)."""
    if mode == "vanilla":
        s = vanilla_scores(inputs, head, scale_scores)
    elif mode == "mixed":
        s = mixed_scores(inputs, head, scale_scores)
    else:
        raise ValueError(f"unknown attention mode {mode!r}")
    m, n = inputs.k.shape[0], inputs.q.shape[0]
    h, d = head.heads, head.head_dim

    if inputs.mask is not None:
        mk = np.asarray(inputs.mask)
        if mk.shape != (m, n):
            raise ValueError(f"mask: expected ({m}, {n}), got {mk.shape}")
        mask3 = np.broadcast_to(mk[:, :, None], (m, n, h))
    else:
        mask3 = np.zeros((m, n, h), dtype=inputs.q.dtype)
    attn = T.masked_softmax(s, mask3, axis=0)  # one unit of weight per (query, head)

    vr = _split_heads(T.matmul(inputs.v, head.wv), m, h, d, False)  # (M,1,H,d)
    attn4 = T.reshape(attn, (m, n, h, 1))
    mixed_v = T.reduce_sum(T.elementwise_mul(attn4, vr), axis=0)  # (N,H,d)
    flat = T.reshape(mixed_v, (n, h * d))
    return T.matmul(flat, head.wo, trans_b=True)
