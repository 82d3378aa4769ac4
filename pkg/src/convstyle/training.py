"""Mini-batch training, evaluation, and the multi-variant comparison.

Training samples chunks with replacement from a seeded stream, minimizes
the mean per-chunk MSE between predicted and ground-truth style weights
with Adam, and records train/test MSE curves on fixed seeded subsamples.
Everything is deterministic in (data, config, seed).
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore
from .corpus import Chunk, Conversation, make_chunks
from .errors import ConfigError, MissingModalityError, NumericError, ValidationError
from .features import FeatureConfig
from .model import (COMPARE_ORDER, ModelConfig, PreparedChunk, Variant,
                    forward, init_params, prepare_chunk)
from .optim import AdamState, adam_step
from .seeding import substream


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    iterations: int = 15000
    seed: int = 0
    variant: Variant = Variant.PROPOSED
    eval_every: int = 500
    test_fraction: float = 0.1
    eval_sample: int = 1000  # size of the fixed train/test eval subsamples

    def validate(self) -> None:
        # learning_rate 0 is allowed and skips optimization entirely, so
        # initialization-only runs stay expressible.
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        for name in ("batch_size", "iterations", "eval_every", "eval_sample"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(
                f"test_fraction must be in (0, 1), got {self.test_fraction}")


@dataclass(frozen=True)
class CurvePoint:
    iteration: int
    train_mse: float
    test_mse: float


@dataclass
class MetricsReport:
    variant: str
    seed: int
    final_test_mse: float
    curve: list[CurvePoint]
    config: dict
    wall_clock_s: float | None
    train_chunks: int
    test_chunks: int

    def to_json_dict(self, include_timing: bool = False) -> dict:
        return {
            "variant": self.variant,
            "seed": self.seed,
            "final_test_mse": self.final_test_mse,
            "curve": [{"iter": p.iteration, "train_mse": p.train_mse,
                       "test_mse": p.test_mse} for p in self.curve],
            "config": self.config,
            # measured time is volatile, so the serialized report carries it
            # only on request; determinism of the file wins by default
            "wall_clock_s": self.wall_clock_s if include_timing else None,
            "train_chunks": self.train_chunks,
            "test_chunks": self.test_chunks,
        }


def _config_echo(cfg: TrainConfig, fcfg: FeatureConfig, mcfg: ModelConfig) -> dict:
    training = asdict(cfg)
    training["variant"] = cfg.variant.value
    return {"features": asdict(fcfg), "model": asdict(mcfg), "training": training}


def _prepare_all(chunks: list[Chunk | PreparedChunk],
                 fcfg: FeatureConfig) -> list[PreparedChunk]:
    return [c if isinstance(c, PreparedChunk) else prepare_chunk(c, fcfg)
            for c in chunks]


def _require_styles(prepared: list[PreparedChunk], variant: Variant, side: str) -> None:
    for p in prepared:
        if p.target_style is None:
            raise MissingModalityError(
                f"{side} chunk in conversation {p.conversation_id} has no target style")
        if variant.needs_context_styles and p.context_styles is None:
            raise MissingModalityError(
                f"variant {variant.value} needs context styles; conversation "
                f"{p.conversation_id} lacks them")


def _subsample(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    if n <= k:
        return np.arange(n)
    return np.sort(rng.choice(n, size=k, replace=False))


def _mean_mse(prepared: list[PreparedChunk], params: ParamStore, variant: Variant,
              fcfg: FeatureConfig) -> float:
    total = 0.0
    with ad.no_grad():
        for p in prepared:
            pred = forward(variant, p, params, fcfg).data
            diff = pred - p.target_style
            total += float(diff @ diff) / diff.shape[0]
    return total / len(prepared)


def evaluate(chunks: list[Chunk | PreparedChunk], params: ParamStore,
             variant: Variant, fcfg: FeatureConfig) -> float:
    """Mean per-chunk MSE of predictions against target styles."""
    if not chunks:
        raise ValidationError("cannot evaluate on an empty chunk list")
    prepared = _prepare_all(chunks, fcfg)
    _require_styles(prepared, variant, "eval")
    return _mean_mse(prepared, params, variant, fcfg)


def train(train_chunks: list[Chunk | PreparedChunk],
          test_chunks: list[Chunk | PreparedChunk],
          cfg: TrainConfig, fcfg: FeatureConfig,
          mcfg: ModelConfig) -> tuple[ParamStore, MetricsReport]:
    """Train one variant; returns final parameters and the metrics report."""
    cfg.validate()
    fcfg.validate()
    mcfg.validate()
    if not train_chunks:
        raise ValidationError("training needs at least one chunk")
    if not test_chunks:
        raise ValidationError("training needs a non-empty test set")
    started = time.perf_counter()
    variant = cfg.variant
    prepared_train = _prepare_all(train_chunks, fcfg)
    prepared_test = _prepare_all(test_chunks, fcfg)
    _require_styles(prepared_train, variant, "train")
    _require_styles(prepared_test, variant, "test")

    params = init_params(variant, fcfg, mcfg, cfg.seed)
    state = AdamState.for_params(params)
    batch_rng = substream(cfg.seed, "batches")
    train_eval = [prepared_train[i] for i in
                  _subsample(len(prepared_train), cfg.eval_sample,
                             substream(cfg.seed, "train-eval"))]
    test_eval = [prepared_test[i] for i in
                 _subsample(len(prepared_test), cfg.eval_sample,
                            substream(cfg.seed, "test-eval"))]

    def curve_point(iteration: int) -> CurvePoint:
        return CurvePoint(iteration,
                          _mean_mse(train_eval, params, variant, fcfg),
                          _mean_mse(test_eval, params, variant, fcfg))

    curve = [curve_point(0)]
    n_train = len(prepared_train)
    for iteration in range(1, cfg.iterations + 1):
        batch = batch_rng.integers(0, n_train, size=cfg.batch_size)
        losses = []
        for i in batch:
            p = prepared_train[i]
            pred = forward(variant, p, params, fcfg)
            losses.append(ad.mse(pred, ad.constant(p.target_style)))
        loss = ad.scale(ad.add_n(losses), 1.0 / cfg.batch_size)
        value = loss.item()
        if not math.isfinite(value):
            raise NumericError(f"non-finite loss {value!r} at iteration {iteration}")
        if cfg.learning_rate > 0:
            loss.backward()
            adam_step(params, state, cfg.learning_rate)
        if iteration % cfg.eval_every == 0:
            curve.append(curve_point(iteration))

    final_test_mse = _mean_mse(prepared_test, params, variant, fcfg)
    report = MetricsReport(
        variant=variant.label,
        seed=cfg.seed,
        final_test_mse=final_test_mse,
        curve=curve,
        config=_config_echo(cfg, fcfg, mcfg),
        wall_clock_s=time.perf_counter() - started,
        train_chunks=len(prepared_train),
        test_chunks=len(prepared_test),
    )
    return params, report


# ---------------------------------------------------------------------------
# Analytic reference predictors
# ---------------------------------------------------------------------------

def uniform_predictor_mse(chunks: list[Chunk | PreparedChunk],
                          fcfg: FeatureConfig) -> float:
    """MSE of always predicting the uniform style vector."""
    prepared = _prepare_all(chunks, fcfg)
    if not prepared:
        raise ValidationError("no chunks to evaluate")
    uniform = np.full(fcfg.style_dim, 1.0 / fcfg.style_dim)
    total = 0.0
    for p in prepared:
        if p.target_style is None:
            raise MissingModalityError("chunk has no target style")
        diff = uniform - p.target_style
        total += float(diff @ diff) / diff.shape[0]
    return total / len(prepared)


def copy_last_mse(chunks: list[Chunk | PreparedChunk], fcfg: FeatureConfig) -> float:
    """MSE of predicting the most recent context utterance's style."""
    prepared = _prepare_all(chunks, fcfg)
    if not prepared:
        raise ValidationError("no chunks to evaluate")
    total = 0.0
    for p in prepared:
        if p.target_style is None or p.context_styles is None:
            raise MissingModalityError("copy-last heuristic needs style vectors")
        diff = p.context_styles[-1] - p.target_style
        total += float(diff @ diff) / diff.shape[0]
    return total / len(prepared)


# ---------------------------------------------------------------------------
# Train/test splitting and the variant comparison
# ---------------------------------------------------------------------------

def split_conversations(conversations: list[Conversation], seed: int,
                        test_fraction: float = 0.1
                        ) -> tuple[list[Conversation], list[Conversation]]:
    """Partition conversations by seeded shuffle; corpus order kept per side."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = len(conversations)
    if n < 2:
        raise ValidationError("need at least two conversations to split")
    order = np.arange(n)
    substream(seed, "split").shuffle(order)
    n_test = min(n - 1, max(1, int(round(test_fraction * n))))
    test_ids = set(order[:n_test].tolist())
    train = [conversations[i] for i in range(n) if i not in test_ids]
    test = [conversations[i] for i in range(n) if i in test_ids]
    return train, test


@dataclass
class ComparisonRow:
    variant: str
    seed: int
    final_test_mse: float


@dataclass
class ComparisonReport:
    """Per-variant results across seeds, with analytic reference rows."""

    config: dict
    seeds: list[int]
    rows: list[ComparisonRow] = field(default_factory=list)
    baselines: list[dict] = field(default_factory=list)
    summary: list[dict] = field(default_factory=list)
    ordering: list[str] = field(default_factory=list)

    def mean_mse(self, variant: Variant) -> float:
        values = [r.final_test_mse for r in self.rows if r.variant == variant.label]
        return float(np.mean(values))

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "seeds": self.seeds,
            "rows": [asdict(r) for r in self.rows],
            "baselines": self.baselines,
            "summary": self.summary,
            "ordering": self.ordering,
        }


def compare_variants(conversations: list[Conversation], cfg: TrainConfig,
                     fcfg: FeatureConfig, mcfg: ModelConfig,
                     seeds: list[int]) -> ComparisonReport:
    """Train all four variants per seed on identical splits and summarize."""
    if not seeds:
        raise ConfigError("compare needs at least one seed")
    report = ComparisonReport(config=_config_echo(cfg, fcfg, mcfg),
                              seeds=list(seeds))
    for seed in seeds:
        train_convs, test_convs = split_conversations(conversations, seed,
                                                      cfg.test_fraction)
        train_prep = _prepare_all(make_chunks(train_convs), fcfg)
        test_prep = _prepare_all(make_chunks(test_convs), fcfg)
        report.baselines.append({
            "seed": seed,
            "uniform_mse": uniform_predictor_mse(test_prep, fcfg),
            "copy_last_mse": copy_last_mse(test_prep, fcfg),
        })
        for variant in COMPARE_ORDER:
            run_cfg = replace(cfg, seed=seed, variant=variant)
            _, metrics = train(train_prep, test_prep, run_cfg, fcfg, mcfg)
            report.rows.append(ComparisonRow(variant.label, seed,
                                             metrics.final_test_mse))
    for variant in COMPARE_ORDER:
        values = [r.final_test_mse for r in report.rows
                  if r.variant == variant.label]
        report.summary.append({
            "variant": variant.label,
            "mean_mse": float(np.mean(values)),
            "std_mse": float(np.std(values)),
        })
    report.ordering = [s["variant"] for s in
                       sorted(report.summary, key=lambda s: s["mean_mse"])]
    return report
