"""Command-line surface: exit codes, determinism, cross-command consistency."""

import json

import numpy as np
import pytest

from convstyle import autodiff as ad
from convstyle import cli
from convstyle.checkpoint import load_checkpoint, save_checkpoint
from convstyle.corpus import Conversation, Utterance, load_corpus, make_chunks, save_corpus
from convstyle.features import FeatureConfig
from convstyle.model import ModelConfig, Variant, init_params
from convstyle.training import evaluate, split_conversations


def run_cli(*argv):
    return cli.main(list(argv))


SMALL_CFG = {
    "features": {"raw_dim": 16, "text_dim": 16, "style_dim": 4, "hash_seed": 1},
    "model": {"hidden_dim": 16, "attn_dim": 16, "gru_dim": 16},
    "training": {"iterations": 20, "eval_every": 10, "eval_sample": 1000,
                 "batch_size": 8},
    "synth": {"conversations": 24, "style_dim": 4, "min_length": 6,
              "max_length": 12, "topics": 3, "vocab_per_topic": 12,
              "words_per_sentence": 5},
}


@pytest.fixture()
def cfg_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL_CFG), encoding="utf-8")
    return str(path)


@pytest.fixture()
def corpus_path(tmp_path, cfg_path):
    path = tmp_path / "corpus.jsonl"
    assert run_cli("generate", "--config", cfg_path, "--seed", "3",
                   "--out", str(path)) == 0
    return str(path)


class TestGenerate:
    def test_deterministic_bytes(self, tmp_path, cfg_path):
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        assert run_cli("generate", "--config", cfg_path, "--seed", "7",
                       "--out", str(a)) == 0
        assert run_cli("generate", "--config", cfg_path, "--seed", "7",
                       "--out", str(b)) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_zero_conversations(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"synth": {"conversations": 0}}), encoding="utf-8")
        out = tmp_path / "empty.jsonl"
        assert run_cli("generate", "--config", str(cfg), "--seed", "1",
                       "--out", str(out)) == 0
        captured = capsys.readouterr().out
        assert "conversations: 0" in captured
        assert out.read_text(encoding="utf-8") == ""

    def test_stdout_counts_match_file(self, tmp_path, cfg_path, capsys):
        out = tmp_path / "c.jsonl"
        run_cli("generate", "--config", cfg_path, "--seed", "5", "--out", str(out))
        captured = capsys.readouterr().out
        total = sum(len(c) for c in load_corpus(out))
        assert f"utterances: {total}" in captured

    def test_bad_config_key_exit_3(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"synth": {"amplitude": 3}}), encoding="utf-8")
        code = run_cli("generate", "--config", str(cfg), "--seed", "1",
                       "--out", str(tmp_path / "x.jsonl"))
        assert code == 3
        assert "amplitude" in capsys.readouterr().err


class TestStats:
    def test_fixture_table(self, tmp_path, capsys):
        convs = [Conversation("c1", [Utterance("c1", 0, "A", "a b"),
                                     Utterance("c1", 1, "B", "c")])]
        path = tmp_path / "fix.jsonl"
        save_corpus(convs, path)
        assert run_cli("stats", "--corpus", str(path)) == 0
        out = capsys.readouterr().out
        assert "Words per sentence" in out
        assert "conversations: 1" in out

    def test_empty_corpus_exit_2(self, tmp_path, capsys):
        path = tmp_path / "empty.jsonl"
        path.write_text("", encoding="utf-8")
        assert run_cli("stats", "--corpus", str(path)) == 2

    def test_json_matches_table_numbers(self, tmp_path, capsys, corpus_path):
        capsys.readouterr()  # drop fixture output
        assert run_cli("stats", "--corpus", corpus_path, "--json") == 0
        payload = json.loads(capsys.readouterr().out)
        convs = load_corpus(corpus_path)
        assert payload["conversations"] == len(convs)
        assert payload["utterances"] == sum(len(c) for c in convs)
        row = payload["words_per_sentence"]
        assert row["min"] <= row["avg"] <= row["max"]

    def test_parse_error_reports_line(self, tmp_path, capsys):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"conversation_id": "c", "index": 0, '
                        '"speaker_id": "A", "text": "hi"}\n{broken\n',
                        encoding="utf-8")
        assert run_cli("stats", "--corpus", str(path)) == 2
        assert "line 2" in capsys.readouterr().err


class TestTrainEval:
    def test_zero_lr_checkpoint_equals_fresh_init(self, tmp_path, corpus_path):
        cfg = dict(SMALL_CFG)
        cfg["training"] = {**SMALL_CFG["training"], "learning_rate": 0.0,
                           "iterations": 1}
        cfg_path = tmp_path / "lr0.json"
        cfg_path.write_text(json.dumps(cfg), encoding="utf-8")
        ckpt = tmp_path / "m.ckpt"
        metrics = tmp_path / "m.json"
        assert run_cli("train", "--corpus", corpus_path, "--config", str(cfg_path),
                       "--variant", "proposed", "--seed", "6",
                       "--out-checkpoint", str(ckpt),
                       "--out-metrics", str(metrics)) == 0
        tensors, echo = load_checkpoint(ckpt)
        fresh = init_params(Variant.PROPOSED,
                            FeatureConfig(**echo["features"]),
                            ModelConfig(**echo["model"]), seed=6)
        for name, tensor in fresh.items():
            assert np.array_equal(tensors[name], tensor.data), name

    def test_rerun_byte_identical_metrics_and_checkpoint(self, tmp_path,
                                                         corpus_path, cfg_path):
        outs = []
        for tag in ("one", "two"):
            ckpt = tmp_path / f"{tag}.ckpt"
            metrics = tmp_path / f"{tag}.json"
            assert run_cli("train", "--corpus", corpus_path, "--config", cfg_path,
                           "--variant", "graph_text_encoded", "--seed", "2",
                           "--out-checkpoint", str(ckpt),
                           "--out-metrics", str(metrics)) == 0
            outs.append((ckpt.read_bytes(), metrics.read_bytes()))
        assert outs[0][0] == outs[1][0]
        assert outs[0][1] == outs[1][1]

    def test_timings_flag_breaks_byte_identity_but_keeps_schema(self, tmp_path,
                                                                corpus_path,
                                                                cfg_path):
        metrics = tmp_path / "timed.json"
        assert run_cli("train", "--corpus", corpus_path, "--config", cfg_path,
                       "--variant", "baseline_gru", "--seed", "2",
                       "--out-checkpoint", str(tmp_path / "t.ckpt"),
                       "--out-metrics", str(metrics), "--timings") == 0
        payload = json.loads(metrics.read_text(encoding="utf-8"))
        assert payload["wall_clock_s"] is not None
        assert payload["wall_clock_s"] > 0

    def test_metrics_schema_keys(self, tmp_path, corpus_path, cfg_path):
        metrics = tmp_path / "m.json"
        run_cli("train", "--corpus", corpus_path, "--config", cfg_path,
                "--variant", "proposed", "--seed", "1",
                "--out-checkpoint", str(tmp_path / "m.ckpt"),
                "--out-metrics", str(metrics))
        payload = json.loads(metrics.read_text(encoding="utf-8"))
        assert set(payload) == {"variant", "seed", "final_test_mse", "curve",
                                "config", "wall_clock_s", "train_chunks",
                                "test_chunks"}
        assert payload["wall_clock_s"] is None  # deterministic by default
        assert [p["iter"] for p in payload["curve"]] == [0, 10, 20]

    def test_train_then_eval_matches_final_curve_point(self, tmp_path,
                                                       corpus_path, cfg_path):
        ckpt = tmp_path / "ck.ckpt"
        metrics = tmp_path / "mm.json"
        assert run_cli("train", "--corpus", corpus_path, "--config", cfg_path,
                       "--variant", "proposed", "--seed", "4",
                       "--out-checkpoint", str(ckpt),
                       "--out-metrics", str(metrics)) == 0
        payload = json.loads(metrics.read_text(encoding="utf-8"))
        final_point = payload["curve"][-1]
        assert final_point["iter"] == payload["config"]["training"]["iterations"]

        # rebuild the train split exactly as cmd_train does and evaluate it
        convs = load_corpus(corpus_path)
        train_convs, _ = split_conversations(convs, seed=4, test_fraction=0.1)
        split_path = tmp_path / "trainsplit.jsonl"
        save_corpus(train_convs, split_path)
        tensors, echo = load_checkpoint(ckpt)
        params = init_params(Variant.PROPOSED, FeatureConfig(**echo["features"]),
                             ModelConfig(**echo["model"]), seed=0)
        params.load_values(tensors)
        got = evaluate(make_chunks(train_convs), params, Variant.PROPOSED,
                       FeatureConfig(**echo["features"]))
        assert abs(got - final_point["train_mse"]) <= 1e-12

        # and the eval command agrees with the library call
        import contextlib, io
        buf = io.StringIO()
        with contextlib.redirect_stdout(buf):
            assert run_cli("eval", "--corpus", str(split_path),
                           "--checkpoint", str(ckpt)) == 0
        printed = float(buf.getvalue().split("mse:")[1].strip())
        assert abs(printed - got) <= got * 1e-6  # printed with 6 significant digits

    def test_eval_uniform_checkpoint_on_uniform_corpus(self, tmp_path, capsys):
        fcfg = FeatureConfig(raw_dim=16, text_dim=16, style_dim=4)
        mcfg = ModelConfig(hidden_dim=16, attn_dim=16, gru_dim=16)
        params = init_params(Variant.PROPOSED, fcfg, mcfg, seed=0)
        params["out.W"].data[:] = 0.0
        params["out.b"].data[:] = 0.0
        config = {"features": {"raw_dim": 16, "text_dim": 16, "style_dim": 4,
                               "speaker_slots": 6, "hash_seed": 0},
                  "model": {"hidden_dim": 16, "attn_dim": 16, "gru_dim": 16},
                  "training": {"variant": "proposed"}}
        ckpt = tmp_path / "uniform.ckpt"
        save_checkpoint(ckpt, params, config)
        uniform = np.full(4, 0.25)
        utts = [Utterance("c", i, f"s{i % 2}", f"w{i}", uniform.copy())
                for i in range(7)]
        corpus = tmp_path / "uniform.jsonl"
        save_corpus([Conversation("c", utts)], corpus)
        assert run_cli("eval", "--corpus", str(corpus),
                       "--checkpoint", str(ckpt)) == 0
        out = capsys.readouterr().out
        assert "mse: 0.000000e+00" in out

    def test_eval_style_dim_mismatch_exit_3(self, tmp_path, corpus_path):
        fcfg = FeatureConfig(raw_dim=16, text_dim=16, style_dim=9)
        mcfg = ModelConfig(hidden_dim=16, attn_dim=16, gru_dim=16)
        params = init_params(Variant.PROPOSED, fcfg, mcfg, seed=0)
        config = {"features": {"raw_dim": 16, "text_dim": 16, "style_dim": 9,
                               "speaker_slots": 6, "hash_seed": 0},
                  "model": {"hidden_dim": 16, "attn_dim": 16, "gru_dim": 16},
                  "training": {"variant": "proposed"}}
        ckpt = tmp_path / "mismatch.ckpt"
        save_checkpoint(ckpt, params, config)
        assert run_cli("eval", "--corpus", corpus_path,
                       "--checkpoint", str(ckpt)) == 3

    def test_missing_styles_exit_3(self, tmp_path, cfg_path):
        corpus = tmp_path / "nostyle.jsonl"
        save_corpus([Conversation("c", [Utterance("c", i, f"s{i % 2}", f"word{i} text")
                                        for i in range(8)]),
                     Conversation("d", [Utterance("d", i, "s0", f"w{i}")
                                        for i in range(8)])], corpus)
        code = run_cli("train", "--corpus", str(corpus), "--config", cfg_path,
                       "--variant", "proposed", "--seed", "1",
                       "--out-checkpoint", str(tmp_path / "x.ckpt"),
                       "--out-metrics", str(tmp_path / "x.json"))
        assert code == 3


class TestExitCodes:
    def test_numeric_failure_exits_4(self, tmp_path, corpus_path, cfg_path,
                                     monkeypatch, capsys):
        from convstyle.errors import NumericError

        def explode(*args, **kwargs):
            raise NumericError("non-finite loss at iteration 3")

        monkeypatch.setattr(cli, "train", explode)
        code = run_cli("train", "--corpus", corpus_path, "--config", cfg_path,
                       "--variant", "proposed", "--seed", "1",
                       "--out-checkpoint", str(tmp_path / "x.ckpt"),
                       "--out-metrics", str(tmp_path / "x.json"))
        assert code == 4
        assert "iteration 3" in capsys.readouterr().err

    def test_unreadable_corpus_exits_1(self, tmp_path):
        code = run_cli("stats", "--corpus", str(tmp_path / "missing.jsonl"))
        assert code == 1


class TestCompare:
    def test_degenerate_compare(self, tmp_path, corpus_path, capsys):
        cfg = dict(SMALL_CFG)
        cfg["training"] = {**SMALL_CFG["training"], "learning_rate": 0.0,
                           "iterations": 1}
        cfg_path = tmp_path / "cmp.json"
        cfg_path.write_text(json.dumps(cfg), encoding="utf-8")
        out = tmp_path / "cmp_out.json"
        assert run_cli("compare", "--corpus", corpus_path, "--config",
                       str(cfg_path), "--seeds", "1", "--out", str(out)) == 0
        payload = json.loads(out.read_text(encoding="utf-8"))
        assert [r["variant"] for r in payload["rows"]] == [
            "BaselineGRU", "GraphTextRaw", "GraphTextEncoded", "Proposed"]
        table = capsys.readouterr().out
        pos = [table.index(v) for v in ("BaselineGRU", "GraphTextRaw",
                                        "GraphTextEncoded", "Proposed")]
        assert pos == sorted(pos)

    def test_rerun_byte_identical(self, tmp_path, corpus_path, cfg_path):
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / f"cmp_{tag}.json"
            assert run_cli("compare", "--corpus", corpus_path, "--config",
                           cfg_path, "--seeds", "1,2", "--out", str(out)) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]


class TestGradcheckCommand:
    def test_passes_small_dims(self, capsys):
        assert run_cli("gradcheck", "--dims", "SMALL", "--seed", "0") == 0
        out = capsys.readouterr().out
        assert "gradcheck passed" in out
        assert "FAIL" not in out

    def test_seed_changes_points_not_outcome(self):
        assert run_cli("gradcheck", "--dims", "SMALL", "--seed", "1") == 0
        assert run_cli("gradcheck", "--dims", "SMALL", "--seed", "2") == 0

    def test_mutated_relu_exits_5_naming_relu(self, monkeypatch, capsys):
        original = ad.relu

        def broken_relu(t):
            out = original(t)
            if out._backward is not None:
                orig_bw = out._backward

                def flipped():
                    before = t.grad
                    t.grad = None
                    orig_bw()
                    flip = -t.grad if t.grad is not None else None
                    t.grad = flip if before is None else before + flip
                out._backward = flipped
            return out

        monkeypatch.setattr(ad, "relu", broken_relu)
        assert run_cli("gradcheck", "--dims", "SMALL", "--seed", "0") == 5
        out = capsys.readouterr().out
        assert "FAIL op:relu" in out
