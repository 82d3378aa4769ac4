"""Fused numeric kernels for the hot training loop.

Each kernel bundles the forward or backward math of one model stage into a
single call so the per-chunk tape stays short. Two interchangeable
implementations exist for every kernel:

* a numba ``@njit`` version (default when numba is importable), and
* a pure-numpy version.

Select with the ``CONVSTYLE_BACKEND`` environment variable (``numba`` or
``numpy``) or at runtime via :func:`use_backend`. Kernels are deliberately
single-threaded (no ``prange``) so results are reproducible regardless of
thread count. All arrays are float64; relation codes are int64.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

from .errors import ConfigError

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

ENV_VAR = "CONVSTYLE_BACKEND"


# ---------------------------------------------------------------------------
# Two-layer relu perceptron (text encoder), batched over rows.
# A1 = X W1^T + b1 ; Z1 = relu(A1) ; A2 = Z1 W2^T + b2 ; Z2 = relu(A2)
# ---------------------------------------------------------------------------

def _dense2_fw(X, W1, b1, W2, b2):
    A1 = np.dot(X, W1.T) + b1
    Z1 = np.maximum(A1, 0.0)
    A2 = np.dot(Z1, W2.T) + b2
    Z2 = np.maximum(A2, 0.0)
    return Z2, A2, Z1, A1


def _dense2_bw(dZ2, A2, Z1, A1, X, W1, W2):
    dA2 = dZ2 * (A2 > 0.0)
    dW2 = np.dot(dA2.T, Z1)
    db2 = np.sum(dA2, 0)
    dZ1 = np.dot(dA2, W2)
    dA1 = dZ1 * (A1 > 0.0)
    dW1 = np.dot(dA1.T, X)
    db1 = np.sum(dA1, 0)
    dX = np.dot(dA1, W1)
    return dX, dW1, db1, dW2, db2


# ---------------------------------------------------------------------------
# Relational graph convolution, stage 1.
# A[d] = b + sum_s alpha[d,s] * W[rel[d,s]] @ X[s] ; H1 = relu(A)
# MSG[d,s] = W[rel[d,s]] @ X[s] is cached for the backward pass.
# ---------------------------------------------------------------------------

def _rgcn_fw_loops(X, W, b, alpha, rel):
    n, f = X.shape
    h = b.shape[0]
    nrel = W.shape[0]
    per_rel = np.empty((nrel, n, h))
    for r in range(nrel):
        per_rel[r] = np.dot(X, W[r].T)
    MSG = np.empty((n, n, h))
    A = np.empty((n, h))
    for d in range(n):
        acc = b.copy()
        for s in range(n):
            m = per_rel[rel[d, s], s]
            MSG[d, s] = m
            acc = acc + alpha[d, s] * m
        A[d] = acc
    H1 = np.maximum(A, 0.0)
    return H1, A, MSG


def _rgcn_bw_loops(dH1, A, MSG, X, W, alpha, rel):
    n, f = X.shape
    h = A.shape[1]
    nrel = W.shape[0]
    dA = dH1 * (A > 0.0)
    db = np.sum(dA, 0)
    dalpha = np.empty((n, n))
    for d in range(n):
        for s in range(n):
            dalpha[d, s] = np.dot(dA[d], MSG[d, s])
    dX = np.zeros((n, f))
    dW = np.empty((nrel, h, f))
    mask = np.empty((n, n))
    for r in range(nrel):
        for d in range(n):
            for s in range(n):
                mask[d, s] = alpha[d, s] if rel[d, s] == r else 0.0
        dW[r] = np.dot(dA.T, np.dot(mask, X))
        dX += np.dot(np.dot(mask.T, dA), W[r])
    return dX, dW, db, dalpha


def _rgcn_fw_np(X, W, b, alpha, rel):
    n = X.shape[0]
    h = b.shape[0]
    # MSG[d,s] = W[rel[d,s]] @ X[s]; gather per-relation row maps.
    per_rel = np.einsum("rhf,sf->rsh", W, X)
    MSG = per_rel[rel, np.arange(n)[None, :]]
    A = b + np.einsum("ds,dsh->dh", alpha, MSG)
    H1 = np.maximum(A, 0.0)
    return H1, A, MSG


def _rgcn_bw_np(dH1, A, MSG, X, W, alpha, rel):
    nrel = W.shape[0]
    dA = dH1 * (A > 0.0)
    db = dA.sum(0)
    dalpha = np.einsum("dh,dsh->ds", dA, MSG)
    dX = np.zeros_like(X)
    dW = np.empty_like(W)
    for r in range(nrel):
        mask = np.where(rel == r, alpha, 0.0)
        dW[r] = np.dot(dA.T, np.dot(mask, X))
        dX += np.dot(np.dot(mask.T, dA), W[r])
    return dX, dW, db, dalpha


# ---------------------------------------------------------------------------
# Plain graph convolution, stage 2, over the complete 5-node graph.
# A2[d] = Wg @ mean_s(H1[s]) + Ws @ H1[d] + b ; H2 = relu(A2)
# ---------------------------------------------------------------------------

def _stage2_fw(H1, Wg, Ws, b):
    n = H1.shape[0]
    mean = np.sum(H1, 0) / n
    gm = np.dot(Wg, mean)
    A2 = np.dot(H1, Ws.T) + gm + b
    H2 = np.maximum(A2, 0.0)
    return H2, A2


def _stage2_bw(dH2, A2, H1, Wg, Ws):
    n = H1.shape[0]
    dA = dH2 * (A2 > 0.0)
    db = np.sum(dA, 0)
    dWs = np.dot(dA.T, H1)
    dH1 = np.dot(dA, Ws)
    dgm = np.sum(dA, 0)
    mean = np.sum(H1, 0) / n
    dWg = dgm.reshape(-1, 1) * mean.reshape(1, -1)
    dmean = np.dot(Wg.T, dgm) / n
    dH1 = dH1 + dmean
    return dH1, dWg, dWs, db


# ---------------------------------------------------------------------------
# Scaled dot-product attention summarization.
# qp = Wq q ; K = V Wk^T ; s = (K qp) / sqrt(da) ; a = softmax(s) ; ctx = V^T a
# ---------------------------------------------------------------------------

def _attn_fw(q, V, Wq, Wk):
    da = Wq.shape[0]
    qp = np.dot(Wq, q)
    K = np.dot(V, Wk.T)
    s = np.dot(K, qp) / np.sqrt(da)
    s = s - np.max(s)
    e = np.exp(s)
    a = e / np.sum(e)
    ctx = np.dot(V.T, a)
    return ctx, a, qp, K


def _attn_bw(dctx, a, qp, K, q, V, Wq, Wk):
    da_dim = Wq.shape[0]
    dV = a.reshape(-1, 1) * dctx.reshape(1, -1)
    dattn = np.dot(V, dctx)
    ds = a * (dattn - np.dot(a, dattn))
    dt = ds / np.sqrt(da_dim)
    dqp = np.dot(K.T, dt)
    dK = dt.reshape(-1, 1) * qp.reshape(1, -1)
    dWq = dqp.reshape(-1, 1) * q.reshape(1, -1)
    dq = np.dot(Wq.T, dqp)
    dWk = np.dot(dK.T, V)
    dV = dV + np.dot(dK, Wk)
    return dq, dV, dWq, dWk


# ---------------------------------------------------------------------------
# Uni-directional GRU over a fixed-length input sequence, h0 = 0.
# z = sig(Wz x + Uz h + bz); r = sig(Wr x + Ur h + br)
# c = tanh(Wh x + Uh (r*h) + bh); h' = (1-z)*h + z*c
# ---------------------------------------------------------------------------

def _gru_fw(X, Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh):
    T = X.shape[0]
    h = bz.shape[0]
    Hs = np.zeros((T + 1, h))
    Zs = np.empty((T, h))
    Rs = np.empty((T, h))
    Cs = np.empty((T, h))
    for t in range(T):
        x = X[t]
        hp = Hs[t]
        z = 1.0 / (1.0 + np.exp(-(np.dot(Wz, x) + np.dot(Uz, hp) + bz)))
        r = 1.0 / (1.0 + np.exp(-(np.dot(Wr, x) + np.dot(Ur, hp) + br)))
        c = np.tanh(np.dot(Wh, x) + np.dot(Uh, r * hp) + bh)
        Zs[t] = z
        Rs[t] = r
        Cs[t] = c
        Hs[t + 1] = (1.0 - z) * hp + z * c
    return Hs, Zs, Rs, Cs


def _gru_bw(dhT, Hs, Zs, Rs, Cs, X, Wz, Uz, Wr, Ur, Wh, Uh):
    T = X.shape[0]
    dX = np.zeros_like(X)
    dWz = np.zeros_like(Wz)
    dUz = np.zeros_like(Uz)
    dbz = np.zeros(Wz.shape[0])
    dWr = np.zeros_like(Wr)
    dUr = np.zeros_like(Ur)
    dbr = np.zeros(Wr.shape[0])
    dWh = np.zeros_like(Wh)
    dUh = np.zeros_like(Uh)
    dbh = np.zeros(Wh.shape[0])
    dh = dhT.copy()
    for t in range(T - 1, -1, -1):
        x = X[t]
        hp = Hs[t]
        z = Zs[t]
        r = Rs[t]
        c = Cs[t]
        dz = dh * (c - hp)
        dc = dh * z
        dhp = dh * (1.0 - z)
        dah = dc * (1.0 - c * c)
        dWh += dah.reshape(-1, 1) * x.reshape(1, -1)
        dbh += dah
        rh = r * hp
        dUh += dah.reshape(-1, 1) * rh.reshape(1, -1)
        drh = np.dot(Uh.T, dah)
        dr = drh * hp
        dhp = dhp + drh * r
        dar = dr * r * (1.0 - r)
        dWr += dar.reshape(-1, 1) * x.reshape(1, -1)
        dbr += dar
        dUr += dar.reshape(-1, 1) * hp.reshape(1, -1)
        dhp = dhp + np.dot(Ur.T, dar)
        daz = dz * z * (1.0 - z)
        dWz += daz.reshape(-1, 1) * x.reshape(1, -1)
        dbz += daz
        dUz += daz.reshape(-1, 1) * hp.reshape(1, -1)
        dhp = dhp + np.dot(Uz.T, daz)
        dX[t] = np.dot(Wh.T, dah) + np.dot(Wr.T, dar) + np.dot(Wz.T, daz)
        dh = dhp
    return dX, dWz, dUz, dbz, dWr, dUr, dbr, dWh, dUh, dbh


def _gru_bw_loops(dhT, Hs, Zs, Rs, Cs, X, Wz, Uz, Wr, Ur, Wh, Uh):
    # Same math as _gru_bw with allocation-free accumulation loops;
    # numba turns the inner loops into SIMD without temporaries.
    T, din = X.shape
    h = Wz.shape[0]
    dX = np.zeros_like(X)
    dWz = np.zeros_like(Wz)
    dUz = np.zeros_like(Uz)
    dbz = np.zeros(h)
    dWr = np.zeros_like(Wr)
    dUr = np.zeros_like(Ur)
    dbr = np.zeros(h)
    dWh = np.zeros_like(Wh)
    dUh = np.zeros_like(Uh)
    dbh = np.zeros(h)
    dh = dhT.copy()
    for t in range(T - 1, -1, -1):
        x = X[t]
        hp = Hs[t]
        z = Zs[t]
        r = Rs[t]
        c = Cs[t]
        dz = dh * (c - hp)
        dc = dh * z
        dhp = dh * (1.0 - z)
        dah = dc * (1.0 - c * c)
        dar = np.dot(Uh.T, dah) * hp * r * (1.0 - r)
        daz = dz * z * (1.0 - z)
        for i in range(h):
            vh = dah[i]
            vr = dar[i]
            vz = daz[i]
            for j in range(din):
                xj = x[j]
                dWh[i, j] += vh * xj
                dWr[i, j] += vr * xj
                dWz[i, j] += vz * xj
            for j in range(h):
                hj = hp[j]
                dUh[i, j] += vh * r[j] * hj
                dUr[i, j] += vr * hj
                dUz[i, j] += vz * hj
            dbh[i] += vh
            dbr[i] += vr
            dbz[i] += vz
        drh = np.dot(Uh.T, dah)
        dhp = dhp + drh * r
        dhp = dhp + np.dot(Ur.T, dar)
        dhp = dhp + np.dot(Uz.T, daz)
        dX[t] = np.dot(Wh.T, dah) + np.dot(Wr.T, dar) + np.dot(Wz.T, daz)
        dh = dhp
    return dX, dWz, dUz, dbz, dWr, dUr, dbr, dWh, dUh, dbh


# ---------------------------------------------------------------------------
# Adam update for one flat parameter array, in place. t is the 1-based step.
# ---------------------------------------------------------------------------

def _adam_update_loops(p, g, m, v, t, lr, beta1, beta2, eps):
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for i in range(p.shape[0]):
        gi = g[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * gi
        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi
        p[i] -= lr * (m[i] / bc1) / (np.sqrt(v[i] / bc2) + eps)


def _adam_update_np(p, g, m, v, t, lr, beta1, beta2, eps):
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


# ---------------------------------------------------------------------------
# Backend selection
# ---------------------------------------------------------------------------

_NUMPY_IMPL = {
    "dense2_fw": _dense2_fw,
    "dense2_bw": _dense2_bw,
    "rgcn_fw": _rgcn_fw_np,
    "rgcn_bw": _rgcn_bw_np,
    "stage2_fw": _stage2_fw,
    "stage2_bw": _stage2_bw,
    "attn_fw": _attn_fw,
    "attn_bw": _attn_bw,
    "gru_fw": _gru_fw,
    "gru_bw": _gru_bw,
    "adam_update": _adam_update_np,
}

if HAS_NUMBA:
    _NUMBA_IMPL = {
        "dense2_fw": njit(cache=True)(_dense2_fw),
        "dense2_bw": njit(cache=True)(_dense2_bw),
        "rgcn_fw": njit(cache=True)(_rgcn_fw_loops),
        "rgcn_bw": njit(cache=True)(_rgcn_bw_loops),
        "stage2_fw": njit(cache=True)(_stage2_fw),
        "stage2_bw": njit(cache=True)(_stage2_bw),
        "attn_fw": njit(cache=True)(_attn_fw),
        "attn_bw": njit(cache=True)(_attn_bw),
        "gru_fw": njit(cache=True)(_gru_fw),
        "gru_bw": njit(cache=True)(_gru_bw_loops),
        "adam_update": njit(cache=True)(_adam_update_loops),
    }
else:
    _NUMBA_IMPL = {}

_BACKENDS = {"numpy": _NUMPY_IMPL}
if HAS_NUMBA:
    _BACKENDS["numba"] = _NUMBA_IMPL

_active_name = "numpy"
_active = _NUMPY_IMPL


def use_backend(name: str) -> None:
    """Switch kernel implementations. Valid names: 'numpy', 'numba'."""
    global _active_name, _active
    if name == "numba" and not HAS_NUMBA:
        raise ConfigError("backend 'numba' requested but numba is not importable")
    if name not in _BACKENDS:
        raise ConfigError(f"unknown backend {name!r}; expected 'numpy' or 'numba'")
    _active_name = name
    _active = _BACKENDS[name]


def active_backend() -> str:
    return _active_name


def _default_backend() -> str:
    env = os.environ.get(ENV_VAR)
    if env is None:
        return "numba" if HAS_NUMBA else "numpy"
    if env not in ("numpy", "numba"):
        warnings.warn(f"{ENV_VAR}={env!r} not recognized; falling back to defaults")
        return "numba" if HAS_NUMBA else "numpy"
    if env == "numba" and not HAS_NUMBA:
        warnings.warn(f"{ENV_VAR}=numba but numba is not importable; using numpy")
        return "numpy"
    return env


use_backend(_default_backend())


def dense2_fw(X, W1, b1, W2, b2):
    return _active["dense2_fw"](X, W1, b1, W2, b2)


def dense2_bw(dZ2, A2, Z1, A1, X, W1, W2):
    return _active["dense2_bw"](dZ2, A2, Z1, A1, X, W1, W2)


def rgcn_fw(X, W, b, alpha, rel):
    return _active["rgcn_fw"](X, W, b, alpha, rel)


def rgcn_bw(dH1, A, MSG, X, W, alpha, rel):
    return _active["rgcn_bw"](dH1, A, MSG, X, W, alpha, rel)


def stage2_fw(H1, Wg, Ws, b):
    return _active["stage2_fw"](H1, Wg, Ws, b)


def stage2_bw(dH2, A2, H1, Wg, Ws):
    return _active["stage2_bw"](dH2, A2, H1, Wg, Ws)


def attn_fw(q, V, Wq, Wk):
    return _active["attn_fw"](q, V, Wq, Wk)


def attn_bw(dctx, a, qp, K, q, V, Wq, Wk):
    return _active["attn_bw"](dctx, a, qp, K, q, V, Wq, Wk)


def gru_fw(X, Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh):
    return _active["gru_fw"](X, Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh)


def gru_bw(dhT, Hs, Zs, Rs, Cs, X, Wz, Uz, Wr, Ur, Wh, Uh):
    return _active["gru_bw"](dhT, Hs, Zs, Rs, Cs, X, Wz, Uz, Wr, Ur, Wh, Uh)


def adam_update(p, g, m, v, t, lr, beta1, beta2, eps):
    return _active["adam_update"](p, g, m, v, t, lr, beta1, beta2, eps)
