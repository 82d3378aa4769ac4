"""The four comparable predictors: the proposed graph model, its two
text-only variants, and the GRU baseline.

All map a chunk (5 context utterances + 1 target) to a predicted
style-weight vector on the simplex. The graph pipeline is: node features
-> typed complete graph -> bilinear edge attention -> relational
convolution -> plain graph convolution -> attention summarization
queried by the target's encoded text and speaker slot -> linear
projection with softmax. The baseline runs a uni-directional GRU over
raw text + speaker features and projects its final state with the same
query.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad
from . import kernels
from .autodiff import ParamStore, Tensor
from .corpus import CONTEXT_WINDOW, Chunk
from .errors import ConfigError, DimensionError, MissingModalityError
from .features import (FeatureConfig, encode_text, encode_text_rows,
                       raw_text_features, speaker_encoding)
from .graph import (N_RELATIONS, ConversationGraph, EdgeWeights,
                    attention_matrix, build_graph)
from .seeding import substream


class Variant(Enum):
    PROPOSED = "proposed"
    GRAPH_TEXT_RAW = "graph_text_raw"
    GRAPH_TEXT_ENCODED = "graph_text_encoded"
    BASELINE_GRU = "baseline_gru"

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def needs_context_styles(self) -> bool:
        return self is Variant.PROPOSED

    @classmethod
    def from_name(cls, name: str) -> "Variant":
        try:
            return cls(name)
        except ValueError:
            options = ", ".join(v.value for v in cls)
            raise ConfigError(f"unknown variant {name!r}; expected one of {options}")


_LABELS = {
    Variant.PROPOSED: "Proposed",
    Variant.GRAPH_TEXT_RAW: "GraphTextRaw",
    Variant.GRAPH_TEXT_ENCODED: "GraphTextEncoded",
    Variant.BASELINE_GRU: "BaselineGRU",
}

# Fixed display order for comparison tables, baseline first.
COMPARE_ORDER = [Variant.BASELINE_GRU, Variant.GRAPH_TEXT_RAW,
                 Variant.GRAPH_TEXT_ENCODED, Variant.PROPOSED]


@dataclass
class ModelConfig:
    hidden_dim: int = 64   # relational/graph convolution width
    attn_dim: int = 64     # summarization attention projection width
    gru_dim: int = 512     # baseline GRU state width (64 at desk scale)

    def validate(self) -> None:
        for name in ("hidden_dim", "attn_dim", "gru_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")


def value_dim(fcfg: FeatureConfig, mcfg: ModelConfig) -> int:
    """Width of attention values: original node features + graph outputs."""
    return fcfg.node_dim + mcfg.hidden_dim


# ---------------------------------------------------------------------------
# Parameter initialization
# ---------------------------------------------------------------------------

def _glorot(rng, fan_in: int, fan_out: int, shape) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


def _add_weight(params: ParamStore, seed: int, name: str, fan_in: int,
                fan_out: int, shape) -> None:
    rng = substream(seed, "init", name)
    params.add(name, _glorot(rng, fan_in, fan_out, shape))


def _add_encoder(params: ParamStore, fcfg: FeatureConfig, seed: int) -> None:
    _add_weight(params, seed, "enc.W1", fcfg.raw_dim, fcfg.text_dim,
                (fcfg.text_dim, fcfg.raw_dim))
    params.add("enc.b1", np.zeros(fcfg.text_dim))
    _add_weight(params, seed, "enc.W2", fcfg.text_dim, fcfg.text_dim,
                (fcfg.text_dim, fcfg.text_dim))
    params.add("enc.b2", np.zeros(fcfg.text_dim))


def init_params(variant: Variant, fcfg: FeatureConfig, mcfg: ModelConfig,
                seed: int) -> ParamStore:
    """Seeded Glorot-uniform weights, zero biases, for one variant."""
    fcfg.validate()
    mcfg.validate()
    if variant is Variant.GRAPH_TEXT_RAW and fcfg.raw_dim > fcfg.text_dim:
        raise ConfigError(
            f"graph_text_raw needs raw_dim <= text_dim to zero-pad "
            f"({fcfg.raw_dim} > {fcfg.text_dim})")
    params = ParamStore()
    _add_encoder(params, fcfg, seed)
    d_s = fcfg.style_dim
    d_q = fcfg.query_dim
    if variant is Variant.BASELINE_GRU:
        h = mcfg.gru_dim
        d_in = fcfg.raw_dim + fcfg.speaker_slots
        for gate in ("z", "r", "h"):
            _add_weight(params, seed, f"gru.W_{gate}", d_in, h, (h, d_in))
            _add_weight(params, seed, f"gru.U_{gate}", h, h, (h, h))
            params.add(f"gru.b_{gate}", np.zeros(h))
        _add_weight(params, seed, "out.W", h + d_q, d_s, (d_s, h + d_q))
        params.add("out.b", np.zeros(d_s))
        return params
    f = fcfg.node_dim
    h = mcfg.hidden_dim
    d_v = value_dim(fcfg, mcfg)
    _add_weight(params, seed, "graph.W_att", f, f, (f, f))
    _add_weight(params, seed, "rgcn.W", f, h, (N_RELATIONS, h, f))
    params.add("rgcn.b1", np.zeros(h))
    _add_weight(params, seed, "gcn2.W_g", h, h, (h, h))
    _add_weight(params, seed, "gcn2.W_self", h, h, (h, h))
    params.add("gcn2.b2", np.zeros(h))
    _add_weight(params, seed, "attn.W_q", d_q, mcfg.attn_dim, (mcfg.attn_dim, d_q))
    _add_weight(params, seed, "attn.W_k", d_v, mcfg.attn_dim, (mcfg.attn_dim, d_v))
    _add_weight(params, seed, "out.W", d_q + d_v, d_s, (d_s, d_q + d_v))
    params.add("out.b", np.zeros(d_s))
    return params


# ---------------------------------------------------------------------------
# Fused differentiable layers (numba/numpy kernels on the tape)
# ---------------------------------------------------------------------------

def _rgcn_apply(X: Tensor, W: Tensor, b: Tensor, alpha: Tensor,
                rel: np.ndarray) -> Tensor:
    H1, A, MSG = kernels.rgcn_fw(X.data, W.data, b.data, alpha.data, rel)
    out = ad._node(H1, (X, W, b, alpha))
    if out.requires_grad:
        def _bw():
            dX, dW, db, dalpha = kernels.rgcn_bw(
                out.grad, A, MSG, X.data, W.data, alpha.data, rel)
            if X.requires_grad:
                ad._acc(X, dX)
            ad._acc(W, dW)
            ad._acc(b, db)
            if alpha.requires_grad:
                ad._acc(alpha, dalpha)
        out._backward = _bw
    return out


def _stage2_apply(H1: Tensor, Wg: Tensor, Ws: Tensor, b: Tensor) -> Tensor:
    H2, A2 = kernels.stage2_fw(H1.data, Wg.data, Ws.data, b.data)
    out = ad._node(H2, (H1, Wg, Ws, b))
    if out.requires_grad:
        def _bw():
            dH1, dWg, dWs, db = kernels.stage2_bw(
                out.grad, A2, H1.data, Wg.data, Ws.data)
            if H1.requires_grad:
                ad._acc(H1, dH1)
            ad._acc(Wg, dWg)
            ad._acc(Ws, dWs)
            ad._acc(b, db)
        out._backward = _bw
    return out


def _attn_apply(q: Tensor, V: Tensor, Wq: Tensor, Wk: Tensor) -> Tensor:
    ctx, a, qp, K = kernels.attn_fw(q.data, V.data, Wq.data, Wk.data)
    out = ad._node(ctx, (q, V, Wq, Wk))
    if out.requires_grad:
        def _bw():
            dq, dV, dWq, dWk = kernels.attn_bw(
                out.grad, a, qp, K, q.data, V.data, Wq.data, Wk.data)
            if q.requires_grad:
                ad._acc(q, dq)
            if V.requires_grad:
                ad._acc(V, dV)
            ad._acc(Wq, dWq)
            ad._acc(Wk, dWk)
        out._backward = _bw
    return out


def _gru_seq_apply(inputs: Tensor, params: ParamStore) -> Tensor:
    """Run the GRU over all rows of `inputs` from h=0; returns the final state."""
    names = ("gru.W_z", "gru.U_z", "gru.b_z", "gru.W_r", "gru.U_r", "gru.b_r",
             "gru.W_h", "gru.U_h", "gru.b_h")
    Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh = (params[n] for n in names)
    Hs, Zs, Rs, Cs = kernels.gru_fw(inputs.data, Wz.data, Uz.data, bz.data,
                                    Wr.data, Ur.data, br.data,
                                    Wh.data, Uh.data, bh.data)
    out = ad._node(Hs[-1].copy(), (inputs, Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh))
    if out.requires_grad:
        def _bw():
            grads = kernels.gru_bw(out.grad, Hs, Zs, Rs, Cs, inputs.data,
                                   Wz.data, Uz.data, Wr.data, Ur.data,
                                   Wh.data, Uh.data)
            dX, dWz, dUz, dbz, dWr, dUr, dbr, dWh, dUh, dbh = grads
            if inputs.requires_grad:
                ad._acc(inputs, dX)
            for t, g in zip((Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh),
                            (dWz, dUz, dbz, dWr, dUr, dbr, dWh, dUh, dbh)):
                ad._acc(t, g)
        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# Public layer operations
# ---------------------------------------------------------------------------

def rgcn_layer(g: ConversationGraph, X: Tensor, alpha: EdgeWeights | Tensor,
               params: ParamStore) -> Tensor:
    """Stage-1 relational convolution: relu of attention-weighted,
    relation-typed messages into each node."""
    weights = alpha.tensor if isinstance(alpha, EdgeWeights) else alpha
    return _rgcn_apply(X, params["rgcn.W"], params["rgcn.b1"], weights,
                       g.relation_codes)


def graph_layer(g: ConversationGraph, H1: Tensor, params: ParamStore) -> Tensor:
    """Stage-2 plain graph convolution: relu of the in-neighbor average
    plus a self transform."""
    return _stage2_apply(H1, params["gcn2.W_g"], params["gcn2.W_self"],
                         params["gcn2.b2"])


def summarize(query: Tensor, X: Tensor, H2: Tensor, params: ParamStore) -> Tensor:
    """Scaled dot-product attention over per-node values concat(x_i, h2_i)."""
    V = ad.concat_cols(X, H2)
    return _attn_apply(query, V, params["attn.W_q"], params["attn.W_k"])


def predict_style(query: Tensor, context: Tensor, params: ParamStore) -> Tensor:
    """Linear projection of concat(query, context) with softmax activation."""
    z = ad.concat(query, context)
    return ad.softmax(ad.add(ad.matvec(params["out.W"], z), params["out.b"]))


def gru_cell(x: Tensor, h: Tensor, params: ParamStore) -> Tensor:
    """One GRU step built from elementary ops (the fused kernel's oracle twin)."""
    def gate(w, u, b, act, hh):
        return act(ad.add(ad.add(ad.matvec(params[w], x), ad.matvec(params[u], hh)),
                          params[b]))
    z = gate("gru.W_z", "gru.U_z", "gru.b_z", ad.sigmoid, h)
    r = gate("gru.W_r", "gru.U_r", "gru.b_r", ad.sigmoid, h)
    rh = ad.hadamard(r, h)
    c = ad.tanh(ad.add(ad.add(ad.matvec(params["gru.W_h"], x),
                              ad.matvec(params["gru.U_h"], rh)),
                       params["gru.b_h"]))
    ones = ad.constant(np.ones(z.shape[0]))
    return ad.add(ad.hadamard(ad.sub(ones, z), h), ad.hadamard(z, c))


# ---------------------------------------------------------------------------
# Chunk preparation and end-to-end forwards
# ---------------------------------------------------------------------------

@dataclass
class PreparedChunk:
    """Frozen per-chunk arrays so the training loop skips re-featurizing."""

    raw_context: np.ndarray          # (5, raw_dim)
    raw_target: np.ndarray           # (raw_dim,)
    context_styles: np.ndarray | None
    target_style: np.ndarray | None
    target_onehot: np.ndarray        # (speaker_slots,)
    relation_codes: np.ndarray       # (5, 5) int64
    gru_inputs: np.ndarray           # (5, raw_dim + speaker_slots)
    conversation_id: str


def prepare_chunk(chunk: Chunk, fcfg: FeatureConfig) -> PreparedChunk:
    g = build_graph(chunk, fcfg)
    raw_context = np.stack([raw_text_features(u.text, fcfg) for u in chunk.context])
    raw_target = raw_text_features(chunk.target.text, fcfg)
    onehots = np.zeros((CONTEXT_WINDOW, fcfg.speaker_slots))
    onehots[np.arange(CONTEXT_WINDOW), g.node_slots] = 1.0
    target_onehot = speaker_encoding(chunk, chunk.target, fcfg)

    styles = None
    if all(u.style is not None for u in chunk.context):
        styles = np.stack([u.style for u in chunk.context])
        if styles.shape[1] != fcfg.style_dim:
            raise DimensionError(
                f"corpus style length {styles.shape[1]} != configured {fcfg.style_dim}")
    target_style = chunk.target.style
    if target_style is not None and target_style.shape[0] != fcfg.style_dim:
        raise DimensionError(
            f"corpus style length {target_style.shape[0]} != configured {fcfg.style_dim}")
    gru_inputs = np.concatenate([raw_context, onehots], axis=1)
    return PreparedChunk(raw_context, raw_target, styles, target_style,
                         target_onehot, g.relation_codes, gru_inputs,
                         chunk.conversation_id)


def _ensure_prepared(chunk: Chunk | PreparedChunk, fcfg: FeatureConfig) -> PreparedChunk:
    if isinstance(chunk, PreparedChunk):
        return chunk
    return prepare_chunk(chunk, fcfg)


def _graph_node_features(prepared: PreparedChunk, params: ParamStore,
                         fcfg: FeatureConfig, variant: Variant) -> Tensor:
    zeros_style = np.zeros((CONTEXT_WINDOW, fcfg.style_dim))
    if variant is Variant.GRAPH_TEXT_RAW:
        padded = np.zeros((CONTEXT_WINDOW, fcfg.text_dim))
        padded[:, :fcfg.raw_dim] = prepared.raw_context
        return ad.constant(np.concatenate([padded, zeros_style], axis=1))
    encoded = encode_text_rows(ad.constant(prepared.raw_context), params)
    if variant is Variant.PROPOSED:
        if prepared.context_styles is None:
            raise MissingModalityError(
                f"variant {variant.value} needs style vectors on all context "
                f"utterances (conversation {prepared.conversation_id})")
        style = prepared.context_styles
    else:
        style = zeros_style
    return ad.concat_cols(encoded, ad.constant(style))


def _query(prepared: PreparedChunk, params: ParamStore) -> Tensor:
    encoded = encode_text(ad.constant(prepared.raw_target), params)
    return ad.concat(encoded, ad.constant(prepared.target_onehot))


def forward_proposed(chunk: Chunk | PreparedChunk, params: ParamStore,
                     fcfg: FeatureConfig, variant: Variant = Variant.PROPOSED) -> Tensor:
    """Graph pipeline forward for the proposed model or a text-only variant."""
    if variant is Variant.BASELINE_GRU:
        raise ConfigError("forward_proposed does not handle the GRU baseline")
    prepared = _ensure_prepared(chunk, fcfg)
    X = _graph_node_features(prepared, params, fcfg, variant)
    alpha = attention_matrix(X, params["graph.W_att"])
    H1 = _rgcn_apply(X, params["rgcn.W"], params["rgcn.b1"], alpha,
                     prepared.relation_codes)
    H2 = _stage2_apply(H1, params["gcn2.W_g"], params["gcn2.W_self"],
                       params["gcn2.b2"])
    query = _query(prepared, params)
    context = summarize(query, X, H2, params)
    return predict_style(query, context, params)


def forward_baseline(chunk: Chunk | PreparedChunk, params: ParamStore,
                     fcfg: FeatureConfig) -> Tensor:
    """GRU over raw text + speaker features; final state joins the query."""
    prepared = _ensure_prepared(chunk, fcfg)
    h_final = _gru_seq_apply(ad.constant(prepared.gru_inputs), params)
    query = _query(prepared, params)
    z = ad.concat(h_final, query)
    return ad.softmax(ad.add(ad.matvec(params["out.W"], z), params["out.b"]))


def forward(variant: Variant, chunk: Chunk | PreparedChunk, params: ParamStore,
            fcfg: FeatureConfig) -> Tensor:
    """Dispatch a chunk through the requested variant."""
    if variant is Variant.BASELINE_GRU:
        return forward_baseline(chunk, params, fcfg)
    return forward_proposed(chunk, params, fcfg, variant)
