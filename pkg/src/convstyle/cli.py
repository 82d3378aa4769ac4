"""Command-line interface.

Subcommands: generate (synthetic corpus), stats (corpus statistics),
train, eval, compare (the four-variant ordering experiment), and
gradcheck (finite-difference verification of every op and model).

Exit codes: 0 ok, 2 input validation, 3 config/shape mismatch,
4 numeric failure, 5 gradient-check failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .corpus import corpus_stats, load_corpus, make_chunks, save_corpus
from .errors import (ConfigError, DimensionError, MissingModalityError,
                     NumericError, ParseError, ValidationError)
from .features import FeatureConfig
from .gradchecks import TOLERANCE, run_checks
from .model import ModelConfig, Variant, init_params
from .synthetic import generate_synthetic
from .training import compare_variants, evaluate, split_conversations, train

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VALIDATION = 2
EXIT_CONFIG = 3
EXIT_NUMERIC = 4
EXIT_GRADCHECK = 5


def _load_run_config(path: str | None) -> RunConfig:
    return load_config(path) if path else RunConfig()


def _write_json(path: str, obj: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def cmd_generate(args) -> int:
    cfg = _load_run_config(args.config)
    conversations = generate_synthetic(cfg.synth, args.seed)
    save_corpus(conversations, args.out)
    utterances = sum(len(c) for c in conversations)
    print(f"conversations: {len(conversations)}")
    print(f"utterances: {utterances}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    report = corpus_stats(load_corpus(args.corpus))
    if args.json:
        print(json.dumps(report.to_dict(), sort_keys=True, indent=2))
        return EXIT_OK
    print(f"{'':28s} {'min':>10s} {'average':>10s} {'max':>10s}")
    for label, row in report.rows():
        print(f"{label:28s} {row.minimum:10g} {row.average:10.4g} {row.maximum:10g}")
    print(f"conversations: {report.conversations}")
    print(f"utterances: {report.utterances}")
    return EXIT_OK


def _configs_from_echo(echo: dict) -> tuple[FeatureConfig, ModelConfig, Variant]:
    try:
        fcfg = FeatureConfig(**echo["features"])
        mcfg = ModelConfig(**echo["model"])
        variant = Variant.from_name(echo["training"]["variant"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"checkpoint config echo is malformed: {exc}") from exc
    return fcfg, mcfg, variant


def cmd_train(args) -> int:
    cfg = _load_run_config(args.config)
    if args.variant is not None:
        cfg.training.variant = Variant.from_name(args.variant)
    if args.seed is not None:
        cfg.training.seed = args.seed
    conversations = load_corpus(args.corpus)
    train_convs, test_convs = split_conversations(
        conversations, cfg.training.seed, cfg.training.test_fraction)
    params, report = train(make_chunks(train_convs), make_chunks(test_convs),
                           cfg.training, cfg.features, cfg.model)
    save_checkpoint(args.out_checkpoint, params, report.config)
    _write_json(args.out_metrics, report.to_json_dict(include_timing=args.timings))
    print(f"variant: {report.variant}")
    print(f"train_chunks: {report.train_chunks}  test_chunks: {report.test_chunks}")
    print(f"final_test_mse: {report.final_test_mse:.6e}")
    print(f"wall_clock_s: {report.wall_clock_s:.2f}")
    print(f"wrote {args.out_checkpoint} and {args.out_metrics}")
    return EXIT_OK


def cmd_eval(args) -> int:
    tensors, echo = load_checkpoint(args.checkpoint)
    fcfg, mcfg, variant = _configs_from_echo(echo)
    params = init_params(variant, fcfg, mcfg, seed=0)
    params.load_values(tensors)
    conversations = load_corpus(args.corpus)
    chunks = make_chunks(conversations)
    if not chunks:
        raise ValidationError("corpus yields no chunks to evaluate")
    for chunk in chunks:
        style = chunk.target.style
        if style is not None and style.shape[0] != fcfg.style_dim:
            raise ConfigError(
                f"corpus style dimension {style.shape[0]} does not match "
                f"checkpoint style dimension {fcfg.style_dim}")
    mse = evaluate(chunks, params, variant, fcfg)
    print(f"mse: {mse:.6e}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load_run_config(args.config)
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    conversations = load_corpus(args.corpus)
    report = compare_variants(conversations, cfg.training, cfg.features,
                              cfg.model, seeds)
    _write_json(args.out, report.to_json_dict())
    print(f"{'variant':18s} {'mean_mse':>12s} {'std_mse':>12s}")
    for row in report.summary:
        print(f"{row['variant']:18s} {row['mean_mse']:12.6e} {row['std_mse']:12.6e}")
    uniform = float(np.mean([b["uniform_mse"] for b in report.baselines]))
    copy_last = float(np.mean([b["copy_last_mse"] for b in report.baselines]))
    print(f"{'(uniform)':18s} {uniform:12.6e}")
    print(f"{'(copy-last)':18s} {copy_last:12.6e}")
    print(f"ordering: {' < '.join(report.ordering)}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = run_checks(args.dims, seed=args.seed)
    failures = []
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"{status} {result.name:28s} max_rel_err {result.max_rel_error:.3e}")
        if not result.passed:
            failures.append(result.name)
    if failures:
        print(f"gradcheck FAILED (tolerance {TOLERANCE:g}): {', '.join(failures)}")
        return EXIT_GRADCHECK
    print(f"gradcheck passed: {len(results)} checks < {TOLERANCE:g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convstyle",
        description="Graph-based conversational speaking-style prediction")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic conversation corpus")
    p.add_argument("--config", help="JSON config file (synth.* keys)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output corpus path (JSONL)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("stats", help="corpus statistics (min/average/max table)")
    p.add_argument("--corpus", required=True)
    p.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train one variant and write checkpoint+metrics")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--variant", help="overrides training.variant")
    p.add_argument("--seed", type=int, help="overrides training.seed")
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--out-metrics", required=True)
    p.add_argument("--timings", action="store_true",
                   help="record wall-clock time in the metrics JSON "
                        "(breaks byte-reproducibility)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="train all four variants across seeds")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seeds", required=True, help="comma-separated seed list")
    p.add_argument("--out", required=True, help="output JSON path")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--dims", default="SMALL", choices=["SMALL", "DEFAULT",
                                                       "small", "default"])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConfigError, DimensionError, MissingModalityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
