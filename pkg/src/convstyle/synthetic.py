"""Synthetic conversation generator with speaker and topic dynamics.

Each conversation gets a speaker count, a length, and per-speaker base
styles. Utterance styles follow a mixing recurrence over the previous
same-speaker style, the previous other-speaker style, a topic-driven
style basis, the speaker's base style, and fresh Dirichlet noise, so
both text and style history carry predictive signal. Texts are drawn
from disjoint per-topic vocabularies.

Generation is deterministic in (config, seed): every conversation uses
its own substream derived from the run seed and the conversation index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Chunk, Conversation, Utterance
from .errors import ConfigError
from .seeding import hash64

TOPIC_SMOOTHING = 0.1


@dataclass
class SynthConfig:
    conversations: int = 1000
    style_dim: int = 10
    min_speakers: int = 2
    max_speakers: int = 4
    min_length: int = 4
    max_length: int = 30
    topics: int = 4
    topic_stay: float = 0.6
    words_per_sentence: int = 8
    vocab_per_topic: int = 40
    turn_keep: float = 0.4
    weight_self: float = 0.4
    weight_inter: float = 0.3
    weight_text: float = 0.2
    weight_base: float = 0.1
    weight_noise: float = 0.05

    def validate(self) -> None:
        if self.conversations < 0:
            raise ConfigError(f"conversations must be >= 0, got {self.conversations}")
        for name in ("style_dim", "min_speakers", "max_speakers", "min_length",
                     "max_length", "topics", "words_per_sentence", "vocab_per_topic"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.min_speakers > self.max_speakers:
            raise ConfigError("min_speakers must not exceed max_speakers")
        if self.min_length > self.max_length:
            raise ConfigError("min_length must not exceed max_length")
        for name in ("topic_stay", "turn_keep"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {getattr(self, name)}")
        weights = self.mixing_weights()
        if any(w < 0 for w in weights):
            raise ConfigError("mixing weights must be non-negative")
        if sum(weights) == 0:
            raise ConfigError("at least one mixing weight must be positive")

    def mixing_weights(self) -> tuple[float, float, float, float, float]:
        return (self.weight_self, self.weight_inter, self.weight_text,
                self.weight_base, self.weight_noise)


def topic_style_basis(cfg: SynthConfig) -> np.ndarray:
    """Fixed smoothed one-hot style vector per topic, shape (topics, style_dim)."""
    d = cfg.style_dim
    basis = np.full((cfg.topics, d), TOPIC_SMOOTHING / d)
    for k in range(cfg.topics):
        basis[k, k % d] += 1.0 - TOPIC_SMOOTHING
    return basis


def _generate_conversation(cfg: SynthConfig, conv_index: int, seed: int,
                           basis: np.ndarray) -> Conversation:
    rng = np.random.default_rng(hash64(seed, conv_index))
    d = cfg.style_dim
    n_speakers = int(rng.integers(cfg.min_speakers, cfg.max_speakers + 1))
    length = int(rng.integers(cfg.min_length, cfg.max_length + 1))
    bases = rng.dirichlet(np.ones(d), size=n_speakers)
    w_self, w_inter, w_text, w_base, w_noise = cfg.mixing_weights()

    cid = f"c{conv_index:06d}"
    last_self = [None] * n_speakers   # most recent style spoken by each speaker
    last_other = [None] * n_speakers  # most recent style heard from someone else
    utterances = []
    speaker = 0
    topic = int(rng.integers(cfg.topics))
    for t in range(length):
        if t > 0:
            if rng.random() >= cfg.turn_keep and n_speakers > 1:
                speaker = (speaker + 1) % n_speakers
            if rng.random() >= cfg.topic_stay and cfg.topics > 1:
                topic = (topic + 1 + int(rng.integers(cfg.topics - 1))) % cfg.topics
        word_ids = rng.integers(0, cfg.vocab_per_topic, size=cfg.words_per_sentence)
        text = " ".join(f"t{topic}w{w}" for w in word_ids)
        noise = rng.dirichlet(np.ones(d))

        base = bases[speaker]
        y_self = last_self[speaker] if last_self[speaker] is not None else base
        y_other = last_other[speaker] if last_other[speaker] is not None else base
        style = (w_self * y_self + w_inter * y_other + w_text * basis[topic]
                 + w_base * base + w_noise * noise)
        style = style / style.sum()

        utterances.append(Utterance(cid, t, f"s{speaker}", text, style))
        last_self[speaker] = style
        for other in range(n_speakers):
            if other != speaker:
                last_other[other] = style
    return Conversation(cid, utterances)


def generate_synthetic(cfg: SynthConfig, seed: int) -> list[Conversation]:
    """Generate a corpus deterministically from (cfg, seed)."""
    cfg.validate()
    basis = topic_style_basis(cfg)
    return [_generate_conversation(cfg, i, seed, basis) for i in range(cfg.conversations)]


def _topic_of(text: str, cfg: SynthConfig) -> int | None:
    words = text.split()
    if not words or not words[0].startswith("t"):
        return None
    head = words[0][1:].split("w")[0]
    try:
        topic = int(head)
    except ValueError:
        return None
    return topic if 0 <= topic < cfg.topics else None


def oracle_prediction(chunk: Chunk, cfg: SynthConfig) -> np.ndarray:
    """Evaluate the generative mixing equation from the observed context.

    Uses the target's true topic (recoverable from its text), the most
    recent same/other-speaker context styles, the mean context style of
    the target's speaker as a stand-in for the hidden base style, and the
    Dirichlet mean for the noise term.
    """
    d = cfg.style_dim
    basis = topic_style_basis(cfg)
    w_self, w_inter, w_text, w_base, w_noise = cfg.mixing_weights()

    speaker = chunk.target.speaker_id
    own = [u.style for u in chunk.context if u.speaker_id == speaker and u.style is not None]
    others = [u.style for u in chunk.context if u.speaker_id != speaker and u.style is not None]
    everything = [u.style for u in chunk.context if u.style is not None]
    uniform = np.full(d, 1.0 / d)

    base = np.mean(own, axis=0) if own else (np.mean(everything, axis=0)
                                             if everything else uniform)
    y_self = own[-1] if own else base
    y_other = others[-1] if others else base
    topic = _topic_of(chunk.target.text, cfg)
    text_term = basis[topic] if topic is not None else uniform

    pred = (w_self * y_self + w_inter * y_other + w_text * text_term
            + w_base * base + w_noise * uniform)
    return pred / pred.sum()
