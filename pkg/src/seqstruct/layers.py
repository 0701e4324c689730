"""Model building blocks.

Each layer couples a global attention sub-layer over hidden vectors with an
equivariant neighborhood sub-layer that updates coordinates through weighted
relative-difference sums. Hidden vectors only ever see coordinates through
interatomic distances, which is what makes the coordinate path equivariant
and the feature path invariant under rigid motions (including reflections).

An EGCL reference layer (the classic equivariant graph convolution over the
complete graph, with 1/(d+1)-normalized coordinate steps) is included for
comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad
from . import geometry as geo


class Variant(str, Enum):
    """Layer wiring variants.

    default              gated residue update, kNN graph, FFN messages
    no_gate              residue update adds a plain FFN of the aggregate
    full_graph           complete pairwise graph instead of kNN
    attn_messages        messages from single-head dot-product attention
                         over neighbors instead of the concat-FFN
    attn_messages_coords additionally drives coordinate updates with the
                         attention weight instead of the coordinate FFN
    """

    DEFAULT = "default"
    NO_GATE = "no_gate"
    FULL_GRAPH = "full_graph"
    ATTN_MESSAGES = "attn_messages"
    ATTN_MESSAGES_COORDS = "attn_messages_coords"


def linear(x: ad.Tensor, w: ad.Tensor, b: ad.Tensor) -> ad.Tensor:
    return ad.matmul(x, w) + b


def _init_linear(rng: np.random.Generator, fan_in: int, fan_out: int):
    bound = 1.0 / math.sqrt(fan_in)
    w = ad.Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
    b = ad.Tensor(rng.uniform(-bound, bound, size=(fan_out,)))
    return w, b


@dataclass
class AttentionParams:
    """Multi-head self-attention block with post-norm residuals."""

    heads: int
    wq: ad.Tensor
    bq: ad.Tensor
    wk: ad.Tensor
    bk: ad.Tensor
    wv: ad.Tensor
    bv: ad.Tensor
    wo: ad.Tensor
    bo: ad.Tensor
    ln1_gain: ad.Tensor
    ln1_bias: ad.Tensor
    ffn_w1: ad.Tensor
    ffn_b1: ad.Tensor
    ffn_w2: ad.Tensor
    ffn_b2: ad.Tensor
    ln2_gain: ad.Tensor
    ln2_bias: ad.Tensor


def init_attention_params(rng: np.random.Generator, d: int, heads: int) -> AttentionParams:
    if d % heads != 0:
        raise ValueError(f"width {d} not divisible by {heads} heads")
    wq, bq = _init_linear(rng, d, d)
    wk, bk = _init_linear(rng, d, d)
    wv, bv = _init_linear(rng, d, d)
    wo, bo = _init_linear(rng, d, d)
    f1, fb1 = _init_linear(rng, d, 4 * d)
    f2, fb2 = _init_linear(rng, 4 * d, d)
    return AttentionParams(
        heads=heads,
        wq=wq, bq=bq, wk=wk, bk=bk, wv=wv, bv=bv, wo=wo, bo=bo,
        ln1_gain=ad.Tensor(np.ones(d)), ln1_bias=ad.Tensor(np.zeros(d)),
        ffn_w1=f1, ffn_b1=fb1, ffn_w2=f2, ffn_b2=fb2,
        ln2_gain=ad.Tensor(np.ones(d)), ln2_bias=ad.Tensor(np.zeros(d)),
    )


@dataclass
class EquivariantParams:
    """Neighborhood sub-layer: message FFN (2d+1 -> d -> d), a scalar edge
    scorer, the coordinate FFN (d -> d -> 1, final layer zero at init so the
    first coordinate step is the identity), the gate FFN (d -> d -> d), and
    key/value projections for the attention-message variants."""

    msg_w1: ad.Tensor
    msg_b1: ad.Tensor
    msg_w2: ad.Tensor
    msg_b2: ad.Tensor
    score_w: ad.Tensor
    score_b: ad.Tensor
    coord_w1: ad.Tensor
    coord_b1: ad.Tensor
    coord_w2: ad.Tensor
    coord_b2: ad.Tensor
    gate_w1: ad.Tensor
    gate_b1: ad.Tensor
    gate_w2: ad.Tensor
    gate_b2: ad.Tensor
    attn_kw: ad.Tensor
    attn_kb: ad.Tensor
    attn_vw: ad.Tensor
    attn_vb: ad.Tensor


def init_equivariant_params(rng: np.random.Generator, d: int) -> EquivariantParams:
    m1, mb1 = _init_linear(rng, 2 * d + 1, d)
    m2, mb2 = _init_linear(rng, d, d)
    sw, sb = _init_linear(rng, d, 1)
    c1, cb1 = _init_linear(rng, d, d)
    g1, gb1 = _init_linear(rng, d, d)
    g2, gb2 = _init_linear(rng, d, d)
    kw, kb = _init_linear(rng, d + 1, d)
    vw, vb = _init_linear(rng, d + 1, d)
    return EquivariantParams(
        msg_w1=m1, msg_b1=mb1, msg_w2=m2, msg_b2=mb2,
        score_w=sw, score_b=sb,
        coord_w1=c1, coord_b1=cb1,
        coord_w2=ad.Tensor(np.zeros((d, 1))), coord_b2=ad.Tensor(np.zeros(1)),
        gate_w1=g1, gate_b1=gb1, gate_w2=g2, gate_b2=gb2,
        attn_kw=kw, attn_kb=kb, attn_vw=vw, attn_vb=vb,
    )


@dataclass
class LayerParams:
    attention: AttentionParams
    equivariant: EquivariantParams


@dataclass
class LayerState:
    """Per-residue state flowing through the stack: hidden vectors h (N, d)
    and coordinates x (N, 3), with the last layer's messages (N, k, d) and
    neighbor weights (N, k) kept for inspection."""

    h: ad.Tensor
    x: ad.Tensor
    m: ad.Tensor | None = None
    w: ad.Tensor | None = None


# ---------------------------------------------------------------------------
# attention sub-layer


def attention_sublayer(h: ad.Tensor, params: AttentionParams) -> ad.Tensor:
    """Post-norm transformer block: LN(MHA(h) + h) then LN(FFN(.) + .).
    Every position attends to every position; no masking."""
    n, d = h.shape
    heads = params.heads
    dh = d // heads

    q = linear(h, params.wq, params.bq)
    k = linear(h, params.wk, params.bk)
    v = linear(h, params.wv, params.bv)

    def split(t):
        return ad.transpose(ad.reshape(t, (n, heads, dh)), (1, 0, 2))

    qh, kh, vh = split(q), split(k), split(v)
    scores = ad.matmul(qh, ad.transpose(kh, (0, 2, 1))) * (1.0 / math.sqrt(dh))
    attn = ad.softmax(scores, axis=-1)
    ctx = ad.matmul(attn, vh)  # (heads, n, dh)
    ctx = ad.reshape(ad.transpose(ctx, (1, 0, 2)), (n, d))
    mixed = linear(ctx, params.wo, params.bo)

    ht = ad.layernorm(h + mixed, params.ln1_gain, params.ln1_bias)
    ffn = linear(ad.relu(linear(ht, params.ffn_w1, params.ffn_b1)), params.ffn_w2, params.ffn_b2)
    return ad.layernorm(ht + ffn, params.ln2_gain, params.ln2_bias)


# ---------------------------------------------------------------------------
# equivariant neighborhood sub-layer


def _edge_tensors(h: ad.Tensor, x: ad.Tensor, graph: geo.NeighborGraph):
    dst, src = geo.edge_list(graph)
    hd = ad.take_rows(h, dst)
    hs = ad.take_rows(h, src)
    xd = ad.take_rows(x, dst)
    xs = ad.take_rows(x, src)
    return dst, src, hd, hs, xd, xs


def message_candidates(
    h: ad.Tensor, x: ad.Tensor, graph: geo.NeighborGraph, params: EquivariantParams
) -> tuple[ad.Tensor, ad.Tensor]:
    """Per-edge message candidates and pre-softmax scores, default wiring:
    candidate = SiLU(FFN(concat(h_center, h_neighbor, distance))), score from
    the scalar head. Both returned flat over edges, grouped by center."""
    _, _, hd, hs, xd, xs = _edge_tensors(h, x, graph)
    dist = ad.vecnorm(xd - xs)
    inp = ad.concat([hd, hs, dist], axis=-1)
    hidden = ad.silu(linear(inp, params.msg_w1, params.msg_b1))
    cand = ad.silu(linear(hidden, params.msg_w2, params.msg_b2))
    scores = linear(cand, params.score_w, params.score_b)
    return cand, scores


def attention_message_candidates(
    h: ad.Tensor, x: ad.Tensor, graph: geo.NeighborGraph, params: EquivariantParams
) -> tuple[ad.Tensor, ad.Tensor]:
    """Message candidates for the attention-message variants: the center's
    hidden vector queries single-head keys/values projected from
    concat(h_neighbor, distance)."""
    _, _, hd, hs, xd, xs = _edge_tensors(h, x, graph)
    dist = ad.vecnorm(xd - xs)
    kv_in = ad.concat([hs, dist], axis=-1)
    keys = linear(kv_in, params.attn_kw, params.attn_kb)
    vals = linear(kv_in, params.attn_vw, params.attn_vb)
    d = h.shape[1]
    scores = ad.sum(hd * keys, axis=-1, keepdims=True) * (1.0 / math.sqrt(d))
    return vals, scores


def neighbor_softmax(scores: ad.Tensor, graph: geo.NeighborGraph) -> ad.Tensor:
    """Normalize flat per-edge scores over each center's neighbor block."""
    n, k_eff = graph.neighbors.shape
    return ad.softmax(ad.reshape(scores, (n, k_eff)), axis=-1)


def message_update(
    h: ad.Tensor,
    x: ad.Tensor,
    graph: geo.NeighborGraph,
    params: EquivariantParams,
    variant: Variant = Variant.DEFAULT,
) -> tuple[ad.Tensor, ad.Tensor]:
    """Weighted messages m (N, k, d) and neighbor weights w (N, k).

    The weight over each residue's neighbors is a softmax of per-edge scores,
    and the returned message is the candidate scaled by its weight.
    """
    n, k_eff = graph.neighbors.shape
    if k_eff == 0:
        raise ValueError("message_update on an empty neighbor graph")
    if variant in (Variant.ATTN_MESSAGES, Variant.ATTN_MESSAGES_COORDS):
        cand, scores = attention_message_candidates(h, x, graph, params)
    else:
        cand, scores = message_candidates(h, x, graph, params)
    w = neighbor_softmax(scores, graph)
    d = h.shape[1]
    m = ad.reshape(cand, (n, k_eff, d)) * ad.reshape(w, (n, k_eff, 1))
    return m, w


def coordinate_update(
    x: ad.Tensor,
    m: ad.Tensor,
    graph: geo.NeighborGraph,
    params: EquivariantParams,
    edge_scalars: ad.Tensor | None = None,
) -> ad.Tensor:
    """x_i + sum_j (x_i - x_j) * scalar(m_ij).

    The per-edge scalar comes from the coordinate FFN unless edge_scalars
    (N, k) is given, which overrides it (used by the variant that reuses
    neighbor weights as coordinate scalars).
    """
    n, k_eff, d = m.shape
    dst, src = geo.edge_list(graph)
    xd = ad.take_rows(x, dst)
    xs = ad.take_rows(x, src)
    if edge_scalars is None:
        flat = ad.reshape(m, (n * k_eff, d))
        hidden = ad.silu(linear(flat, params.coord_w1, params.coord_b1))
        s = linear(hidden, params.coord_w2, params.coord_b2)
    else:
        s = ad.reshape(edge_scalars, (n * k_eff, 1))
    delta = (xd - xs) * s
    return x + ad.sum(ad.reshape(delta, (n, k_eff, 3)), axis=1)


def residue_update(
    h: ad.Tensor,
    m: ad.Tensor,
    params: EquivariantParams,
    variant: Variant = Variant.DEFAULT,
) -> ad.Tensor:
    """h_i + sigmoid(FFN(c_i)) * c_i with c_i the summed messages; the
    no_gate variant adds FFN(c_i) directly."""
    c = ad.sum(m, axis=1)
    hidden = ad.relu(linear(c, params.gate_w1, params.gate_b1))
    f = linear(hidden, params.gate_w2, params.gate_b2)
    if variant == Variant.NO_GATE:
        return h + f
    return h + ad.sigmoid(f) * c


def layer_forward(
    state: LayerState, params: LayerParams, k: int, variant: Variant = Variant.DEFAULT
) -> LayerState:
    """One full layer: attention over h, then neighborhood message,
    coordinate, and residue updates. The neighbor graph is rebuilt from the
    current coordinates every call (coordinates move between layers)."""
    h_mid = attention_sublayer(state.h, params.attention)
    n = state.x.shape[0]
    k_use = n - 1 if variant == Variant.FULL_GRAPH else k
    graph = geo.knn(state.x.data, k_use)
    m, w = message_update(h_mid, state.x, graph, params.equivariant, variant)
    scalars = w if variant == Variant.ATTN_MESSAGES_COORDS else None
    x_new = coordinate_update(state.x, m, graph, params.equivariant, edge_scalars=scalars)
    h_new = residue_update(h_mid, m, params.equivariant, variant)
    return LayerState(h=h_new, x=x_new, m=m, w=w)


# ---------------------------------------------------------------------------
# EGCL reference layer (complete graph, normalized coordinate steps)


@dataclass
class EGCLParams:
    edge_w1: ad.Tensor
    edge_b1: ad.Tensor
    edge_w2: ad.Tensor
    edge_b2: ad.Tensor
    inf_w: ad.Tensor
    inf_b: ad.Tensor
    coord_w1: ad.Tensor
    coord_b1: ad.Tensor
    coord_w2: ad.Tensor  # final layer has no bias
    node_w1: ad.Tensor
    node_b1: ad.Tensor
    node_w2: ad.Tensor
    node_b2: ad.Tensor


def init_egcl_params(rng: np.random.Generator, d: int) -> EGCLParams:
    e1, eb1 = _init_linear(rng, 2 * d + 1, d)
    e2, eb2 = _init_linear(rng, d, d)
    iw, ib = _init_linear(rng, d, 1)
    c1, cb1 = _init_linear(rng, d, d)
    c2, _ = _init_linear(rng, d, 1)
    n1, nb1 = _init_linear(rng, 2 * d, d)
    n2, nb2 = _init_linear(rng, d, d)
    return EGCLParams(
        edge_w1=e1, edge_b1=eb1, edge_w2=e2, edge_b2=eb2,
        inf_w=iw, inf_b=ib,
        coord_w1=c1, coord_b1=cb1, coord_w2=c2,
        node_w1=n1, node_b1=nb1, node_w2=n2, node_b2=nb2,
    )


def egcl_forward(state: LayerState, params: EGCLParams) -> LayerState:
    """Equivariant graph convolution over the complete graph: squared-distance
    edge features, sigmoid edge gates on the feature aggregate, and relative
    differences scaled by phi_x(m)/(d+1) for the coordinate step. The node
    update has no residual."""
    h, x = state.h, state.x
    n, d = h.shape
    graph = geo.knn(x.data, n - 1)
    _, _, hd, hs, xd, xs = _edge_tensors(h, x, graph)

    rel = xd - xs
    d2 = ad.sum(rel * rel, axis=-1, keepdims=True)
    inp = ad.concat([hd, hs, d2], axis=-1)
    m = ad.silu(linear(inp, params.edge_w1, params.edge_b1))
    m = ad.silu(linear(m, params.edge_w2, params.edge_b2))

    gate = ad.sigmoid(linear(m, params.inf_w, params.inf_b))
    dist = ad.vecnorm(rel)
    s = ad.matmul(ad.silu(linear(m, params.coord_w1, params.coord_b1)), params.coord_w2)
    delta = rel * (s / (dist + 1.0))
    x_new = x + ad.sum(ad.reshape(delta, (n, n - 1, 3)), axis=1)

    agg = ad.sum(ad.reshape(gate * m, (n, n - 1, d)), axis=1)
    node_in = ad.concat([h, agg], axis=-1)
    h_new = linear(ad.silu(linear(node_in, params.node_w1, params.node_b1)), params.node_w2, params.node_b2)
    return LayerState(h=h_new, x=x_new)
