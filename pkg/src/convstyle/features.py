"""Per-utterance multi-modal features and chunk-level feature assembly.

Text features are a deterministic hashed bag-of-words (the frozen
sentence-embedding stand-in); a small trainable two-layer relu encoder
refines them. Style features are read from the corpus. Speaker encodings
are chunk-local one-hots assigned by order of first appearance, which
makes them invariant to global speaker renaming.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import kernels
from .autodiff import ParamStore, Tensor
from .corpus import CONTEXT_WINDOW, Chunk, Utterance
from .errors import (CapacityError, ConfigError, DimensionError,
                     MissingModalityError, ValidationError)


@dataclass
class FeatureConfig:
    raw_dim: int = 64       # hashed bag-of-words buckets
    text_dim: int = 64      # trainable encoder output
    style_dim: int = 10     # style-token weight dimensionality
    speaker_slots: int = 6  # one-hot slots per chunk; 6 covers a 6-utterance chunk
    hash_seed: int = 0

    def validate(self) -> None:
        for name in ("raw_dim", "text_dim", "style_dim", "speaker_slots"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.speaker_slots < CONTEXT_WINDOW + 1:
            raise ConfigError(
                f"speaker_slots must cover a chunk's {CONTEXT_WINDOW + 1} utterances, "
                f"got {self.speaker_slots}")

    @property
    def node_dim(self) -> int:
        return self.text_dim + self.style_dim

    @property
    def query_dim(self) -> int:
        return self.text_dim + self.speaker_slots


def _token_bucket(token: str, hash_seed: int, raw_dim: int) -> tuple[int, float]:
    digest = hashlib.blake2b(token.encode("utf-8"),
                             key=str(hash_seed).encode("utf-8")[:64],
                             digest_size=9).digest()
    bucket = int.from_bytes(digest[:8], "little") % raw_dim
    sign = 1.0 if digest[8] & 1 else -1.0
    return bucket, sign


def raw_text_features(text: str, cfg: FeatureConfig) -> np.ndarray:
    """Deterministic signed hashed bag-of-words, L2-normalized if nonzero."""
    vec = np.zeros(cfg.raw_dim)
    for token in text.lower().split():
        bucket, sign = _token_bucket(token, cfg.hash_seed, cfg.raw_dim)
        vec[bucket] += sign
    norm = np.linalg.norm(vec)
    if norm > 0.0:
        vec /= norm
    return vec


def encode_text_rows(raw: Tensor, params: ParamStore) -> Tensor:
    """Trainable 2-layer relu encoder applied to each row of (n, raw_dim)."""
    W1, b1 = params["enc.W1"], params["enc.b1"]
    W2, b2 = params["enc.W2"], params["enc.b2"]
    if raw.data.ndim != 2 or raw.shape[1] != W1.shape[1]:
        raise DimensionError(
            f"encoder input {raw.shape} incompatible with enc.W1 {W1.shape}")
    Z2, A2, Z1, A1 = kernels.dense2_fw(raw.data, W1.data, b1.data, W2.data, b2.data)
    out = ad._node(Z2, (raw, W1, b1, W2, b2))
    if out.requires_grad:
        def _bw():
            dX, dW1, db1, dW2, db2 = kernels.dense2_bw(
                out.grad, A2, Z1, A1, raw.data, W1.data, W2.data)
            if raw.requires_grad:
                ad._acc(raw, dX)
            ad._acc(W1, dW1)
            ad._acc(b1, db1)
            ad._acc(W2, dW2)
            ad._acc(b2, db2)
        out._backward = _bw
    return out


def encode_text(raw: Tensor | np.ndarray, params: ParamStore) -> Tensor:
    """Encode a single raw feature vector to a text_dim vector."""
    t = raw if isinstance(raw, Tensor) else ad.constant(raw)
    if t.data.ndim != 1:
        raise DimensionError(f"encode_text expects a vector, got shape {t.shape}")
    rows = ad.reshape(t, (1, t.shape[0]))
    return ad.flatten(encode_text_rows(rows, params))


def style_features(u: Utterance) -> np.ndarray:
    """The utterance's stored style-weight vector."""
    if u.style is None:
        raise MissingModalityError(
            f"utterance {u.conversation_id}[{u.index}] has no style vector")
    return u.style


def speaker_slots(chunk: Chunk, cfg: FeatureConfig) -> dict[str, int]:
    """Slot per speaker by first appearance scanning context then target."""
    slots: dict[str, int] = {}
    for u in list(chunk.context) + [chunk.target]:
        if u.speaker_id not in slots:
            if len(slots) >= cfg.speaker_slots:
                raise CapacityError(
                    f"chunk has more than {cfg.speaker_slots} distinct speakers")
            slots[u.speaker_id] = len(slots)
    return slots


def speaker_encoding(chunk: Chunk, u: Utterance, cfg: FeatureConfig) -> np.ndarray:
    """One-hot of the utterance's chunk-local speaker slot."""
    slots = speaker_slots(chunk, cfg)
    if u.speaker_id not in slots:
        raise ValidationError(
            f"utterance {u.conversation_id}[{u.index}] does not belong to the chunk")
    vec = np.zeros(cfg.speaker_slots)
    vec[slots[u.speaker_id]] = 1.0
    return vec


def build_node_features(chunk: Chunk, cfg: FeatureConfig, params: ParamStore,
                        use_style: bool) -> Tensor:
    """Per-context-node features: encoded text concatenated with style.

    With use_style off the style slice is all zeros, keeping the shape
    (and hence every downstream weight shape) stable across ablations.
    """
    if len(chunk.context) != CONTEXT_WINDOW:
        raise ValidationError(
            f"chunk context must have {CONTEXT_WINDOW} utterances, got {len(chunk.context)}")
    raw = np.stack([raw_text_features(u.text, cfg) for u in chunk.context])
    encoded = encode_text_rows(ad.constant(raw), params)
    if use_style:
        styles = np.stack([style_features(u) for u in chunk.context])
        if styles.shape[1] != cfg.style_dim:
            raise DimensionError(
                f"corpus style length {styles.shape[1]} != configured {cfg.style_dim}")
    else:
        styles = np.zeros((CONTEXT_WINDOW, cfg.style_dim))
    return ad.concat_cols(encoded, ad.constant(styles))
