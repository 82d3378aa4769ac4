"""Benchmark the numba kernels against the pure-numpy fallback.

Times each fused kernel and an end-to-end chunk forward+backward for
both backends at the default model dimensions, then prints a table
with per-call times and the numba speedup.

Usage:
    python benchmarks/bench_backends.py [--reps 2000] [--chunk-reps 300]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from convstyle import autodiff as ad
from convstyle import kernels
from convstyle.corpus import make_chunks
from convstyle.features import FeatureConfig
from convstyle.model import ModelConfig, Variant, forward, init_params, prepare_chunk
from convstyle.synthetic import SynthConfig, generate_synthetic


def _time(fn, reps: int) -> float:
    fn()  # warmup / JIT
    start = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - start) / reps


def kernel_cases(fcfg: FeatureConfig, mcfg: ModelConfig):
    rng = np.random.default_rng(0)
    f = fcfg.node_dim
    h = mcfg.hidden_dim
    d_in = fcfg.raw_dim + fcfg.speaker_slots

    X5 = rng.normal(size=(5, fcfg.raw_dim))
    W1 = rng.normal(size=(fcfg.text_dim, fcfg.raw_dim))
    b1 = rng.normal(size=fcfg.text_dim)
    W2 = rng.normal(size=(fcfg.text_dim, fcfg.text_dim))
    b2 = rng.normal(size=fcfg.text_dim)
    dZ2 = rng.normal(size=(5, fcfg.text_dim))
    _, A2, Z1, A1 = kernels.dense2_fw(X5, W1, b1, W2, b2)

    Xn = rng.normal(size=(5, f))
    Wr = rng.normal(size=(4, h, f))
    br = rng.normal(size=h)
    alpha = rng.random((5, 5))
    rel = rng.integers(0, 4, (5, 5)).astype(np.int64)
    H1r, Ar, MSG = kernels.rgcn_fw(Xn, Wr, br, alpha, rel)
    dH1 = rng.normal(size=(5, h))

    H1 = rng.normal(size=(5, h))
    Wg = rng.normal(size=(h, h))
    Ws = rng.normal(size=(h, h))
    bs = rng.normal(size=h)
    _, A2s = kernels.stage2_fw(H1, Wg, Ws, bs)

    q = rng.normal(size=fcfg.query_dim)
    V = rng.normal(size=(5, f + h))
    Wq = rng.normal(size=(mcfg.attn_dim, fcfg.query_dim))
    Wk = rng.normal(size=(mcfg.attn_dim, f + h))
    _, a_attn, qp, K = kernels.attn_fw(q, V, Wq, Wk)
    dctx = rng.normal(size=f + h)

    Xg = rng.normal(size=(5, d_in))
    gw = {k: rng.normal(size=(mcfg.gru_dim, d_in)) for k in "zrh"}
    gu = {k: rng.normal(size=(mcfg.gru_dim, mcfg.gru_dim)) for k in "zrh"}
    gb = {k: rng.normal(size=mcfg.gru_dim) for k in "zrh"}
    Hs, Zs, Rs, Cs = kernels.gru_fw(Xg, gw["z"], gu["z"], gb["z"], gw["r"],
                                    gu["r"], gb["r"], gw["h"], gu["h"], gb["h"])
    dhT = rng.normal(size=mcfg.gru_dim)

    p = rng.normal(size=50_000)
    g = rng.normal(size=50_000)
    m = np.zeros(50_000)
    v = np.zeros(50_000)

    return [
        ("dense2_fw", lambda: kernels.dense2_fw(X5, W1, b1, W2, b2)),
        ("dense2_bw", lambda: kernels.dense2_bw(dZ2, A2, Z1, A1, X5, W1, W2)),
        ("rgcn_fw", lambda: kernels.rgcn_fw(Xn, Wr, br, alpha, rel)),
        ("rgcn_bw", lambda: kernels.rgcn_bw(dH1, Ar, MSG, Xn, Wr, alpha, rel)),
        ("stage2_fw", lambda: kernels.stage2_fw(H1, Wg, Ws, bs)),
        ("stage2_bw", lambda: kernels.stage2_bw(dH1, A2s, H1, Wg, Ws)),
        ("attn_fw", lambda: kernels.attn_fw(q, V, Wq, Wk)),
        ("attn_bw", lambda: kernels.attn_bw(dctx, a_attn, qp, K, q, V, Wq, Wk)),
        ("gru_fw", lambda: kernels.gru_fw(Xg, gw["z"], gu["z"], gb["z"], gw["r"],
                                          gu["r"], gb["r"], gw["h"], gu["h"],
                                          gb["h"])),
        ("gru_bw", lambda: kernels.gru_bw(dhT, Hs, Zs, Rs, Cs, Xg, gw["z"],
                                          gu["z"], gw["r"], gu["r"], gw["h"],
                                          gu["h"])),
        ("adam_50k", lambda: kernels.adam_update(p, g, m, v, 1, 1e-4, 0.9,
                                                 0.999, 1e-8)),
    ]


def chunk_step(fcfg, mcfg, variant):
    corpus = generate_synthetic(SynthConfig(conversations=10), seed=3)
    prepared = [prepare_chunk(c, fcfg) for c in make_chunks(corpus)]
    params = init_params(variant, fcfg, mcfg, 0)
    state = {"i": 0}

    def step():
        c = prepared[state["i"] % len(prepared)]
        state["i"] += 1
        loss = ad.mse(forward(variant, c, params, fcfg),
                      ad.constant(c.target_style))
        loss.backward()
        params.zero_grads()

    return step


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--reps", type=int, default=2000,
                        help="repetitions per kernel")
    parser.add_argument("--chunk-reps", type=int, default=300,
                        help="repetitions for end-to-end chunk steps")
    args = parser.parse_args()

    fcfg = FeatureConfig()
    mcfg = ModelConfig(gru_dim=64)
    backends = ["numpy"] + (["numba"] if kernels.HAS_NUMBA else [])
    if len(backends) < 2:
        print("numba unavailable; timing the numpy fallback only")

    rows = []
    for name, fn in kernel_cases(fcfg, mcfg):
        times = {}
        for backend in backends:
            kernels.use_backend(backend)
            times[backend] = _time(fn, args.reps)
        rows.append((name, times))

    for variant in (Variant.PROPOSED, Variant.BASELINE_GRU):
        step = chunk_step(fcfg, mcfg, variant)
        times = {}
        for backend in backends:
            kernels.use_backend(backend)
            times[backend] = _time(step, args.chunk_reps)
        rows.append((f"chunk_step[{variant.value}]", times))

    header = f"{'kernel':26s} " + "".join(f"{b + ' (us)':>14s}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10s}"
    print(header)
    for name, times in rows:
        line = f"{name:26s} " + "".join(f"{times[b] * 1e6:14.2f}" for b in backends)
        if len(backends) == 2:
            line += f"{times['numpy'] / times['numba']:10.2f}"
        print(line)


if __name__ == "__main__":
    main()
