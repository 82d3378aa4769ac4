"""Typed conversation graphs over the five context utterances.

Every chunk yields the complete directed graph with self-loops: 25
ordered (src, dst) pairs. Each edge carries one of four relation types,
the cross product of speaker identity (intra vs inter) and temporal
direction (past-to-future vs future-to-past). Self-loops are intra and
future-to-past. Edge weights come from a bilinear attention score with
a per-destination softmax over each node's five incoming edges.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .corpus import CONTEXT_WINDOW, Chunk
from .errors import DimensionError, ValidationError
from .features import FeatureConfig, speaker_slots

N_RELATIONS = 4


class RelationType(IntEnum):
    INTRA_PAST_TO_FUTURE = 0
    INTRA_FUTURE_TO_PAST = 1
    INTER_PAST_TO_FUTURE = 2
    INTER_FUTURE_TO_PAST = 3


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    relation: RelationType


@dataclass
class ConversationGraph:
    """Complete digraph with self-loops over the context nodes.

    Edges are ordered by (dst, src), so the edge list is the row-major
    flattening of the (dst, src) relation matrix.
    """

    n: int
    edges: list[Edge]
    node_slots: np.ndarray       # chunk-local speaker slot per node
    relation_codes: np.ndarray   # int64 matrix indexed [dst][src]


def classify_relation(src: int, dst: int, src_speaker: str, dst_speaker: str) -> RelationType:
    """Relation of the edge src -> dst; self-loops are intra future-to-past."""
    if src == dst:
        return RelationType.INTRA_FUTURE_TO_PAST
    intra = src_speaker == dst_speaker
    past_to_future = src < dst
    if intra:
        return (RelationType.INTRA_PAST_TO_FUTURE if past_to_future
                else RelationType.INTRA_FUTURE_TO_PAST)
    return (RelationType.INTER_PAST_TO_FUTURE if past_to_future
            else RelationType.INTER_FUTURE_TO_PAST)


def build_graph(chunk: Chunk, cfg: FeatureConfig | None = None) -> ConversationGraph:
    """The typed complete digraph for a chunk's five context utterances."""
    if len(chunk.context) != CONTEXT_WINDOW:
        raise ValidationError(
            f"chunk context must have {CONTEXT_WINDOW} utterances, got {len(chunk.context)}")
    cfg = cfg or FeatureConfig()
    slots = speaker_slots(chunk, cfg)
    speakers = [u.speaker_id for u in chunk.context]
    n = CONTEXT_WINDOW
    edges = []
    codes = np.empty((n, n), dtype=np.int64)
    for dst in range(n):
        for src in range(n):
            rel = classify_relation(src, dst, speakers[src], speakers[dst])
            edges.append(Edge(src, dst, rel))
            codes[dst, src] = int(rel)
    node_slots = np.array([slots[s] for s in speakers], dtype=np.int64)
    return ConversationGraph(n, edges, node_slots, codes)


@dataclass
class EdgeWeights:
    """Attention weights aligned with the graph's (dst, src)-ordered edges."""

    alpha: np.ndarray   # shape (n*n,)
    tensor: Tensor      # shape (n, n), differentiable, rows indexed by dst

    def incoming(self, dst: int) -> np.ndarray:
        n = self.tensor.shape[0]
        return self.alpha[dst * n:(dst + 1) * n]


def attention_matrix(X: Tensor, w_att: Tensor) -> Tensor:
    """Per-destination softmax of bilinear scores x_d^T W x_s, rows = dst."""
    if w_att.data.ndim != 2 or w_att.shape[0] != w_att.shape[1]:
        raise DimensionError(f"attention weight must be square, got {w_att.shape}")
    if X.data.ndim != 2 or X.shape[1] != w_att.shape[0]:
        raise DimensionError(
            f"node features {X.shape} incompatible with attention weight {w_att.shape}")
    scores = ad.matmul(ad.matmul(X, w_att), ad.transpose(X))
    return ad.row_softmax(scores)


def edge_attention(g: ConversationGraph, X: Tensor, params: ParamStore) -> EdgeWeights:
    """Differentiable edge weights for the graph given node features."""
    alpha = attention_matrix(X, params["graph.W_att"])
    return EdgeWeights(alpha.data.reshape(-1).copy(), alpha)


def dump_edges(g: ConversationGraph, weights: EdgeWeights | None = None) -> str:
    """Edge list as text: 'src dst relation_code alpha' sorted by (dst, src)."""
    lines = []
    for i, edge in enumerate(g.edges):
        alpha = weights.alpha[i] if weights is not None else 0.0
        lines.append(f"{edge.src} {edge.dst} {int(edge.relation)} {alpha:.12g}")
    return "\n".join(lines) + "\n"
