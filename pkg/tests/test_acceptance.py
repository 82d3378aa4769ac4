"""Acceptance criteria.

Each test prints one PASS/FAIL line (run with `pytest -s` to see them
live). The ordering experiment (criteria 2 and 3) trains all four
variants over five seeds at desk scale and is the long pole; the whole
module finishes well inside an hour on one desktop core.
"""

import json
import time

import numpy as np
import pytest

from convstyle import autodiff as ad
from convstyle import cli
from convstyle.checkpoint import load_checkpoint, save_checkpoint
from convstyle.corpus import (Conversation, Utterance, corpus_stats,
                              load_corpus, make_chunks, save_corpus)
from convstyle.features import FeatureConfig
from convstyle.graph import RelationType, build_graph
from convstyle.model import ModelConfig, Variant, forward, init_params
from convstyle.synthetic import SynthConfig, generate_synthetic
from convstyle.training import TrainConfig, compare_variants

DESK_FCFG = FeatureConfig()                                   # 64/64/10
DESK_MCFG = ModelConfig(hidden_dim=64, attn_dim=64, gru_dim=64)
DESK_TRAIN = TrainConfig(learning_rate=1e-4, batch_size=32, iterations=3000,
                         eval_every=500)
SEEDS = [1, 2, 3, 4, 5]


def _report(criterion: int, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {criterion} {'PASS' if ok else 'FAIL'}: {detail}",
          flush=True)


@pytest.fixture(scope="module")
def ordering_experiment():
    corpus = generate_synthetic(SynthConfig(), seed=7)
    started = time.perf_counter()
    report = compare_variants(corpus, DESK_TRAIN, DESK_FCFG, DESK_MCFG, SEEDS)
    return report, time.perf_counter() - started


def test_criterion_1_gradient_correctness(capsys):
    started = time.perf_counter()
    code = cli.main(["gradcheck", "--dims", "SMALL", "--seed", "0"])
    elapsed = time.perf_counter() - started
    out = capsys.readouterr().out
    ok = code == 0 and elapsed < 120.0
    with capsys.disabled():
        _report(1, ok, f"gradcheck exit {code}, {out.count('PASS')} checks, "
                       f"{elapsed:.1f}s (< 120s)")
    assert code == 0, out
    assert elapsed < 120.0


def test_criterion_2_ordering_analog(ordering_experiment, capsys):
    report, elapsed = ordering_experiment
    mean = {v: report.mean_mse(v) for v in Variant}
    proposed = mean[Variant.PROPOSED]
    encoded = mean[Variant.GRAPH_TEXT_ENCODED]
    raw = mean[Variant.GRAPH_TEXT_RAW]
    baseline = mean[Variant.BASELINE_GRU]
    ok = (proposed < encoded and encoded <= raw * 1.10
          and proposed < baseline and elapsed < 3600.0)
    with capsys.disabled():
        _report(2, ok,
                f"Baseline {baseline:.4e} | GraphTextRaw {raw:.4e} | "
                f"GraphTextEncoded {encoded:.4e} | Proposed {proposed:.4e} "
                f"({elapsed / 60:.1f} min < 60 min)")
    assert proposed < encoded
    assert encoded <= raw * 1.10
    assert proposed < baseline
    assert elapsed < 3600.0


def test_criterion_3_signal_floor(ordering_experiment, capsys):
    report, _ = ordering_experiment
    floors = {b["seed"]: b for b in report.baselines}
    worst_margin = np.inf
    failures = []
    for row in report.rows:
        floor = min(floors[row.seed]["uniform_mse"],
                    floors[row.seed]["copy_last_mse"])
        worst_margin = min(worst_margin, floor - row.final_test_mse)
        if row.final_test_mse >= floor:
            failures.append((row.variant, row.seed))
    ok = not failures
    with capsys.disabled():
        _report(3, ok, f"all {len(report.rows)} (variant, seed) runs beat both "
                       f"analytic floors; worst margin {worst_margin:.3e}"
                       + (f"; failures: {failures}" if failures else ""))
    assert not failures


def test_criterion_4_graph_construction_oracle(capsys):
    def oracle(src, dst, speakers):
        if src == dst:
            return RelationType.INTRA_FUTURE_TO_PAST
        same = speakers[src] == speakers[dst]
        forward_in_time = src < dst
        if same:
            return (RelationType.INTRA_PAST_TO_FUTURE if forward_in_time
                    else RelationType.INTRA_FUTURE_TO_PAST)
        return (RelationType.INTER_PAST_TO_FUTURE if forward_in_time
                else RelationType.INTER_FUTURE_TO_PAST)

    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(1000):
        speakers = [f"s{rng.integers(5)}" for _ in range(5)]
        context = tuple(Utterance("c", i, speakers[i], f"t{i}")
                        for i in range(5))
        chunk_target = Utterance("c", 5, speakers[0], "t5")
        from convstyle.corpus import Chunk
        g = build_graph(Chunk(context, chunk_target, "c"))
        assert len(g.edges) == 25
        loops = [e for e in g.edges if e.src == e.dst]
        assert len(loops) == 5
        assert all(e.relation is RelationType.INTRA_FUTURE_TO_PAST for e in loops)
        for e in g.edges:
            assert e.relation is oracle(e.src, e.dst, speakers), (speakers, e)
        checked += 1
    with capsys.disabled():
        _report(4, True, f"{checked} random speaker sequences match the "
                         f"per-pair relation oracle exactly")


def test_criterion_5_chunking_arithmetic(capsys):
    rng = np.random.default_rng(99)
    corpora = 0
    for _ in range(200):
        lengths = [int(n) for n in rng.integers(0, 41, size=rng.integers(1, 12))]
        convs = [Conversation(f"c{j}", [Utterance(f"c{j}", i, f"s{i % 3}", "w")
                                        for i in range(n)])
                 for j, n in enumerate(lengths) if n > 0]
        chunks = make_chunks(convs)
        brute = [(conv.id, start)
                 for conv in convs
                 for start in range(len(conv.utterances))
                 if start + 5 < len(conv.utterances)]
        assert len(chunks) == len(brute)
        assert [(c.conversation_id, c.context[0].index) for c in chunks] == brute
        assert len(chunks) == sum(max(0, n - 5) for n in lengths)
        corpora += 1
    with capsys.disabled():
        _report(5, True, f"{corpora} random corpora match brute-force window "
                         f"enumeration and the count formula exactly")


def test_criterion_6_simplex_invariants(capsys):
    checked = 0
    tol = 1e-9
    rng = np.random.default_rng(31337)

    def on_simplex(v):
        return abs(float(v.sum()) - 1.0) <= tol and bool(np.all(v >= 0.0))

    # 4,000 softmax outputs over a wide range of scales
    for _ in range(4000):
        n = int(rng.integers(1, 16))
        v = rng.uniform(-1, 1, size=n) * 10.0 ** rng.integers(-4, 5)
        assert on_simplex(ad.softmax(ad.constant(v)).data)
        checked += 1

    # 1,000 edge-attention rows (200 graphs x 5 destinations)
    from convstyle.corpus import Chunk
    from convstyle.graph import edge_attention
    small = FeatureConfig(raw_dim=8, text_dim=8, style_dim=4)
    ps = ad.ParamStore()
    ps.add("graph.W_att", rng.normal(size=(small.node_dim, small.node_dim)))
    for _ in range(200):
        speakers = [f"s{rng.integers(3)}" for _ in range(5)]
        context = tuple(Utterance("c", i, speakers[i], "w x y") for i in range(5))
        chunk = Chunk(context, Utterance("c", 5, speakers[0], "z"), "c")
        g = build_graph(chunk, small)
        X = ad.constant(rng.normal(size=(5, small.node_dim)))
        weights = edge_attention(g, X, ps)
        for dst in range(5):
            assert on_simplex(weights.incoming(dst))
            checked += 1

    # 1,000 model predictions (250 random chunks through each variant)
    mcfg = ModelConfig(hidden_dim=8, attn_dim=8, gru_dim=8)
    params = {v: init_params(v, small, mcfg, seed=5) for v in Variant}
    for _ in range(250):
        speakers = [f"s{rng.integers(3)}" for _ in range(5)]
        context = tuple(
            Utterance("c", i, speakers[i],
                      " ".join(f"w{rng.integers(30)}" for _ in range(4)),
                      rng.dirichlet(np.ones(small.style_dim)))
            for i in range(5))
        chunk = Chunk(context, Utterance("c", 5, speakers[0], "w0 w1"), "c")
        for variant in Variant:
            assert on_simplex(forward(variant, chunk, params[variant], small).data)
            checked += 1

    # 4,000 generated style vectors
    corpus = generate_synthetic(SynthConfig(conversations=250, min_length=16,
                                            max_length=16), seed=13)
    styles = [u.style for c in corpus for u in c.utterances][:4000]
    assert len(styles) == 4000
    for style in styles:
        assert on_simplex(style)
        checked += 1

    with capsys.disabled():
        _report(6, True, f"{checked} vectors on the simplex "
                         f"(sum within {tol:g}, components >= 0)")


def test_criterion_7_determinism(tmp_path, capsys):
    cfg = {
        "features": {"raw_dim": 16, "text_dim": 16, "style_dim": 4,
                     "hash_seed": 1},
        "model": {"hidden_dim": 16, "attn_dim": 16, "gru_dim": 16},
        "training": {"iterations": 30, "eval_every": 10, "eval_sample": 200,
                     "batch_size": 8},
        "synth": {"conversations": 24, "style_dim": 4, "min_length": 6,
                  "max_length": 12, "topics": 3, "vocab_per_topic": 12,
                  "words_per_sentence": 5},
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg), encoding="utf-8")
    corpus_path = tmp_path / "corpus.jsonl"
    assert cli.main(["generate", "--config", str(cfg_path), "--seed", "3",
                     "--out", str(corpus_path)]) == 0

    metrics = []
    for tag in ("a", "b"):
        ck = tmp_path / f"{tag}.ckpt"
        mt = tmp_path / f"{tag}.metrics.json"
        assert cli.main(["train", "--corpus", str(corpus_path), "--config",
                         str(cfg_path), "--variant", "proposed", "--seed", "2",
                         "--out-checkpoint", str(ck),
                         "--out-metrics", str(mt)]) == 0
        metrics.append(mt.read_bytes())
    train_identical = metrics[0] == metrics[1]

    compares = []
    for tag in ("a", "b"):
        out = tmp_path / f"cmp_{tag}.json"
        assert cli.main(["compare", "--corpus", str(corpus_path), "--config",
                         str(cfg_path), "--seeds", "1", "--out", str(out)]) == 0
    compares = [(tmp_path / "cmp_a.json").read_bytes(),
                (tmp_path / "cmp_b.json").read_bytes()]
    compare_identical = compares[0] == compares[1]

    ck1 = tmp_path / "a.ckpt"
    tensors, echo = load_checkpoint(ck1)
    fresh = init_params(Variant.PROPOSED, FeatureConfig(**echo["features"]),
                        ModelConfig(**echo["model"]), seed=0)
    fresh.load_values(tensors)
    ck2 = tmp_path / "roundtrip.ckpt"
    save_checkpoint(ck2, fresh, echo)
    roundtrip_identical = ck1.read_bytes() == ck2.read_bytes()

    ok = train_identical and compare_identical and roundtrip_identical
    with capsys.disabled():
        _report(7, ok, f"train metrics byte-identical: {train_identical}; "
                       f"compare JSON byte-identical: {compare_identical}; "
                       f"checkpoint round-trip byte-identical: {roundtrip_identical}")
    assert train_identical and compare_identical and roundtrip_identical


def test_criterion_8_stats_fidelity(tmp_path, capsys):
    # 3 conversations, hand-checkable:
    #   c1: A:"a b c", B:"d", A:"e f"        -> 3 sentences, 2 speakers
    #   c2: X:"one two three four"           -> 1 sentence, 1 speaker
    #   c3: P:"", Q:"hi there", P:"ok"       -> 3 sentences, 2 speakers
    convs = [
        Conversation("c1", [Utterance("c1", 0, "A", "a b c"),
                            Utterance("c1", 1, "B", "d"),
                            Utterance("c1", 2, "A", "e f")]),
        Conversation("c2", [Utterance("c2", 0, "X", "one two three four")]),
        Conversation("c3", [Utterance("c3", 0, "P", ""),
                            Utterance("c3", 1, "Q", "hi there"),
                            Utterance("c3", 2, "P", "ok")]),
    ]
    path = tmp_path / "fixture.jsonl"
    save_corpus(convs, path)
    report = corpus_stats(load_corpus(path))

    expected = {
        # sentences/conversation: [3, 1, 3]
        "sentences_per_conversation": (1.0, 7.0 / 3.0, 3.0),
        # speakers/conversation: [2, 1, 2]
        "speakers_per_conversation": (1.0, 5.0 / 3.0, 2.0),
        # sentences/speaker: c1 -> A:2, B:1; c2 -> X:1; c3 -> P:2, Q:1
        "sentences_per_speaker": (1.0, 7.0 / 5.0, 2.0),
        # words/sentence: [3, 1, 2, 4, 0, 2, 1]
        "words_per_sentence": (0.0, 13.0 / 7.0, 4.0),
    }
    checks = {}
    for key, (mn, avg, mx) in expected.items():
        row = getattr(report, key)
        checks[key] = (row.minimum == mn and row.average == avg
                       and row.maximum == mx)
    counts_ok = report.conversations == 3 and report.utterances == 7
    ok = all(checks.values()) and counts_ok

    code = cli.main(["stats", "--corpus", str(path), "--json"])
    payload = json.loads(capsys.readouterr().out)
    json_ok = (code == 0
               and payload["words_per_sentence"]["avg"] == 13.0 / 7.0
               and payload["conversations"] == 3)

    with capsys.disabled():
        _report(8, ok and json_ok,
                f"hand-computed min/avg/max match exactly for all four rows; "
                f"JSON output agrees: {json_ok}")
    assert ok and json_ok
