"""Graph construction and edge attention."""

import numpy as np

from convstyle import autodiff as ad
from convstyle.corpus import Chunk, Utterance
from convstyle.features import FeatureConfig
from convstyle.graph import (RelationType, attention_matrix, build_graph,
                             dump_edges, edge_attention)

SMALL = FeatureConfig(raw_dim=8, text_dim=8, style_dim=4)
F = SMALL.text_dim + SMALL.style_dim


def _chunk(speakers, target_speaker="A"):
    context = tuple(Utterance("c", i, s, f"text {i}") for i, s in enumerate(speakers))
    target = Utterance("c", len(speakers), target_speaker, "target")
    return Chunk(context, target, "c")


def _relation_oracle(src, dst, speakers):
    """Independent per-pair classifier mirroring the stated rules."""
    if src == dst:
        return RelationType.INTRA_FUTURE_TO_PAST
    same = speakers[src] == speakers[dst]
    forward_in_time = src < dst
    if same and forward_in_time:
        return RelationType.INTRA_PAST_TO_FUTURE
    if same:
        return RelationType.INTRA_FUTURE_TO_PAST
    if forward_in_time:
        return RelationType.INTER_PAST_TO_FUTURE
    return RelationType.INTER_FUTURE_TO_PAST


class TestBuildGraph:
    def test_edge_count_and_self_loops(self):
        g = build_graph(_chunk(["A", "B", "C", "A", "B"]))
        assert g.n == 5
        assert len(g.edges) == 25
        loops = [e for e in g.edges if e.src == e.dst]
        assert len(loops) == 5
        assert all(e.relation is RelationType.INTRA_FUTURE_TO_PAST for e in loops)

    def test_every_ordered_pair_exactly_once(self):
        g = build_graph(_chunk(["A", "A", "B", "B", "A"]))
        pairs = [(e.src, e.dst) for e in g.edges]
        assert sorted(pairs) == sorted((s, d) for d in range(5) for s in range(5))
        assert pairs == [(s, d) for d in range(5) for s in range(5)]  # (dst, src) order

    def test_alternating_speakers_specific_edges(self):
        g = build_graph(_chunk(["A", "B", "A", "B", "A"]))
        by_pair = {(e.src, e.dst): e.relation for e in g.edges}
        assert by_pair[(0, 1)] is RelationType.INTER_PAST_TO_FUTURE
        assert by_pair[(2, 0)] is RelationType.INTRA_FUTURE_TO_PAST
        assert by_pair[(1, 1)] is RelationType.INTRA_FUTURE_TO_PAST

    def test_single_speaker_relation_census(self):
        g = build_graph(_chunk(["A"] * 5))
        census = {}
        for e in g.edges:
            census[e.relation] = census.get(e.relation, 0) + 1
        assert census.get(RelationType.INTER_PAST_TO_FUTURE, 0) == 0
        assert census.get(RelationType.INTER_FUTURE_TO_PAST, 0) == 0
        assert census[RelationType.INTRA_FUTURE_TO_PAST] == 15  # 10 backward + 5 loops
        assert census[RelationType.INTRA_PAST_TO_FUTURE] == 10

    def test_pure_function_of_speaker_sequence(self):
        a = build_graph(_chunk(["A", "B", "B", "C", "A"]))
        b = build_graph(_chunk(["A", "B", "B", "C", "A"]))
        assert a.edges == b.edges
        assert np.array_equal(a.relation_codes, b.relation_codes)

    def test_against_per_pair_oracle_on_random_sequences(self):
        rng = np.random.default_rng(77)
        for _ in range(1000):
            speakers = [f"s{rng.integers(4)}" for _ in range(5)]
            g = build_graph(_chunk(speakers, target_speaker=speakers[0]))
            assert len(g.edges) == 25
            for e in g.edges:
                assert e.relation is _relation_oracle(e.src, e.dst, speakers), \
                    (speakers, e)

    def test_relation_codes_match_edges(self):
        g = build_graph(_chunk(["A", "B", "A", "C", "B"]))
        for e in g.edges:
            assert g.relation_codes[e.dst, e.src] == int(e.relation)


class TestEdgeAttention:
    def _params(self, w):
        ps = ad.ParamStore()
        ps.add("graph.W_att", w)
        return ps

    def test_identical_rows_give_uniform(self):
        rng = np.random.default_rng(1)
        row = rng.normal(size=F)
        X = ad.constant(np.tile(row, (5, 1)))
        g = build_graph(_chunk(["A", "B", "A", "B", "A"]))
        weights = edge_attention(g, X, self._params(rng.normal(size=(F, F))))
        assert np.allclose(weights.alpha, 0.2, atol=1e-12)

    def test_zero_weight_gives_uniform(self):
        rng = np.random.default_rng(2)
        X = ad.constant(rng.normal(size=(5, F)))
        g = build_graph(_chunk(["A", "A", "B", "B", "A"]))
        weights = edge_attention(g, X, self._params(np.zeros((F, F))))
        assert np.allclose(weights.alpha, 0.2, atol=1e-15)

    def test_against_explicit_loop_oracle(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(5, F))
        W = rng.normal(size=(F, F))
        g = build_graph(_chunk(["A", "B", "C", "A", "B"]))
        weights = edge_attention(g, ad.constant(X), self._params(W))
        for dst in range(5):
            scores = np.array([X[dst] @ W @ X[src] for src in range(5)])
            e = np.exp(scores - scores.max())
            expected = e / e.sum()
            assert np.allclose(weights.incoming(dst), expected, atol=1e-12)

    def test_per_destination_normalization(self):
        rng = np.random.default_rng(4)
        X = ad.constant(rng.normal(size=(5, F)))
        g = build_graph(_chunk(["A", "B", "A", "C", "A"]))
        weights = edge_attention(g, X, self._params(rng.normal(size=(F, F))))
        for dst in range(5):
            incoming = weights.incoming(dst)
            assert abs(incoming.sum() - 1.0) <= 1e-9
            assert np.all(incoming >= 0.0)

    def test_gradients_wrt_features_and_weight(self):
        rng = np.random.default_rng(5)
        target = ad.constant(rng.uniform(0, 1, size=25))
        for point in range(10):
            prng = np.random.default_rng(300 + point)
            ps = ad.ParamStore()
            ps.add("graph.W_att", prng.uniform(-1, 1, size=(F, F)))
            ps.add("X", prng.uniform(-1, 1, size=(5, F)))

            def f(p):
                return ad.mse(ad.flatten(attention_matrix(p["X"], p["graph.W_att"])),
                              target)

            assert ad.gradient_check(f, ps, eps=1e-5) < 1e-4


class TestDump:
    def test_dump_format(self):
        g = build_graph(_chunk(["A", "B", "A", "B", "A"]))
        rng = np.random.default_rng(8)
        X = ad.constant(rng.normal(size=(5, F)))
        ps = ad.ParamStore()
        ps.add("graph.W_att", rng.normal(size=(F, F)))
        weights = edge_attention(g, X, ps)
        text = dump_edges(g, weights)
        lines = text.strip().split("\n")
        assert len(lines) == 25
        first = lines[0].split()
        assert first[0] == "0" and first[1] == "0"
        assert first[2] == str(int(RelationType.INTRA_FUTURE_TO_PAST))
        # sorted by (dst, src)
        keys = [(int(l.split()[1]), int(l.split()[0])) for l in lines]
        assert keys == sorted(keys)

    def test_dump_deterministic(self):
        g = build_graph(_chunk(["A", "B", "C", "B", "A"]))
        assert dump_edges(g) == dump_edges(g)
