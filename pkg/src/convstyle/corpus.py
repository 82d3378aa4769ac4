"""Conversation corpora: loading, saving, chunking, and statistics.

The on-disk format is JSONL: one utterance object per line with keys
``conversation_id`` (str), ``index`` (int), ``speaker_id`` (str),
``text`` (str) and optionally ``style`` (list of reals on the simplex).
Files may be concatenated; utterance order within a conversation is
given by ``index``, not by line order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError, ValidationError

CONTEXT_WINDOW = 5
STYLE_SUM_TOL = 1e-6

_REQUIRED_KEYS = {"conversation_id": str, "index": int, "speaker_id": str, "text": str}


@dataclass(frozen=True)
class Utterance:
    """One conversational turn."""

    conversation_id: str
    index: int
    speaker_id: str
    text: str
    style: np.ndarray | None = None

    def word_count(self) -> int:
        return len(self.text.split())


@dataclass
class Conversation:
    """An ordered list of utterances sharing a conversation id."""

    id: str
    utterances: list[Utterance]

    @property
    def speakers(self) -> set[str]:
        return {u.speaker_id for u in self.utterances}

    def __len__(self) -> int:
        return len(self.utterances)


@dataclass(frozen=True)
class Chunk:
    """Five context utterances plus the target that follows them."""

    context: tuple[Utterance, ...]
    target: Utterance
    conversation_id: str


@dataclass(frozen=True)
class StatsRow:
    minimum: float
    average: float
    maximum: float


@dataclass
class StatsReport:
    """Min/average/max summaries of the text-derivable corpus statistics."""

    conversations: int
    utterances: int
    sentences_per_conversation: StatsRow
    speakers_per_conversation: StatsRow
    sentences_per_speaker: StatsRow
    words_per_sentence: StatsRow

    def rows(self) -> list[tuple[str, StatsRow]]:
        return [
            ("Sentences per conversation", self.sentences_per_conversation),
            ("Speakers per conversation", self.speakers_per_conversation),
            ("Sentences per speaker", self.sentences_per_speaker),
            ("Words per sentence", self.words_per_sentence),
        ]

    def to_dict(self) -> dict:
        out = {"conversations": self.conversations, "utterances": self.utterances}
        for label, row in self.rows():
            key = label.lower().replace(" ", "_")
            out[key] = {"min": row.minimum, "avg": row.average, "max": row.maximum}
        return out


def _validate_style(raw, line_number: int, where: str) -> np.ndarray:
    style = np.asarray(raw, dtype=np.float64)
    if style.ndim != 1 or style.shape[0] < 1:
        raise ParseError(line_number, f"{where}: style must be a non-empty list of reals")
    if not np.all(np.isfinite(style)):
        raise ValidationError(f"{where}: style has non-finite components")
    if np.any(style < 0):
        raise ValidationError(f"{where}: style has negative components")
    total = float(style.sum())
    if abs(total - 1.0) > STYLE_SUM_TOL:
        raise ValidationError(f"{where}: style sums to {total:.6g}, expected 1")
    return style


def _parse_line(line: str, line_number: int) -> Utterance:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(line_number, f"invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise ParseError(line_number, "expected a JSON object")
    unknown = set(obj) - set(_REQUIRED_KEYS) - {"style"}
    if unknown:
        raise ParseError(line_number, f"unknown keys {sorted(unknown)}")
    for key, typ in _REQUIRED_KEYS.items():
        if key not in obj:
            raise ParseError(line_number, f"missing key {key!r}")
        if not isinstance(obj[key], typ) or isinstance(obj[key], bool):
            raise ParseError(line_number, f"key {key!r} must be {typ.__name__}")
    if obj["index"] < 0:
        raise ParseError(line_number, "index must be non-negative")
    style = None
    if "style" in obj and obj["style"] is not None:
        if not isinstance(obj["style"], list):
            raise ParseError(line_number, "style must be a list of reals")
        where = f"utterance {obj['conversation_id']}[{obj['index']}]"
        style = _validate_style(obj["style"], line_number, where)
    return Utterance(obj["conversation_id"], obj["index"], obj["speaker_id"],
                     obj["text"], style)


def load_corpus(path: str | Path) -> list[Conversation]:
    """Load and validate a JSONL corpus, grouped into conversations.

    Conversations keep their order of first appearance in the file;
    utterances are sorted by index and must be contiguous from 0.
    """
    grouped: dict[str, list[Utterance]] = {}
    style_dim: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            utt = _parse_line(line, line_number)
            if utt.style is not None:
                if style_dim is None:
                    style_dim = utt.style.shape[0]
                elif utt.style.shape[0] != style_dim:
                    raise ValidationError(
                        f"utterance {utt.conversation_id}[{utt.index}]: style length "
                        f"{utt.style.shape[0]} differs from earlier length {style_dim}")
            grouped.setdefault(utt.conversation_id, []).append(utt)

    conversations = []
    for cid, utts in grouped.items():
        utts.sort(key=lambda u: u.index)
        indices = [u.index for u in utts]
        if indices != list(range(len(utts))):
            raise ValidationError(
                f"conversation {cid!r}: indices {indices} are not contiguous from 0")
        conversations.append(Conversation(cid, utts))
    return conversations


def save_corpus(conversations: list[Conversation], path: str | Path) -> None:
    """Write a corpus as JSONL. Round-trips bit-identically through load."""
    with open(path, "w", encoding="utf-8") as fh:
        for conv in conversations:
            for u in conv.utterances:
                obj = {"conversation_id": u.conversation_id, "index": u.index,
                       "speaker_id": u.speaker_id, "text": u.text}
                if u.style is not None:
                    obj["style"] = [float(x) for x in u.style]
                fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def make_chunks(conversations: list[Conversation], window: int = CONTEXT_WINDOW) -> list[Chunk]:
    """Slide a (window+1)-utterance window with stride 1 over each conversation.

    A conversation of length n yields max(0, n - window) chunks; shorter
    conversations yield none.
    """
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    chunks = []
    for conv in conversations:
        utts = conv.utterances
        for start in range(len(utts) - window):
            context = tuple(utts[start:start + window])
            chunks.append(Chunk(context, utts[start + window], conv.id))
    return chunks


def _stats_row(values: list[float]) -> StatsRow:
    return StatsRow(float(min(values)), float(sum(values) / len(values)), float(max(values)))


def corpus_stats(conversations: list[Conversation]) -> StatsReport:
    """Min/average/max of sentence, speaker, and word counts."""
    if not conversations:
        raise ValidationError("cannot compute statistics of an empty corpus")
    sentences_per_conv = [float(len(c)) for c in conversations]
    speakers_per_conv = [float(len(c.speakers)) for c in conversations]
    sentences_per_speaker = []
    for conv in conversations:
        counts: dict[str, int] = {}
        for u in conv.utterances:
            counts[u.speaker_id] = counts.get(u.speaker_id, 0) + 1
        sentences_per_speaker.extend(float(n) for n in counts.values())
    words_per_sentence = [float(u.word_count()) for c in conversations for u in c.utterances]
    return StatsReport(
        conversations=len(conversations),
        utterances=sum(len(c) for c in conversations),
        sentences_per_conversation=_stats_row(sentences_per_conv),
        speakers_per_conversation=_stats_row(speakers_per_conv),
        sentences_per_speaker=_stats_row(sentences_per_speaker),
        words_per_sentence=_stats_row(words_per_sentence),
    )
