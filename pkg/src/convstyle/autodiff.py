"""Dense float64 tensors with reverse-mode differentiation.

A Tensor wraps a numpy array and, when it results from an operation on
tensors that require gradients, remembers its parents and a backward
closure. Calling ``backward()`` on a scalar output walks the recorded
graph once in reverse topological order and accumulates gradients into
``.grad`` of every contributing tensor. The graph is per-forward-pass and
is freed with the tensors themselves.

Operations that only touch constants produce plain constant tensors, so
frozen features never lengthen the tape.
"""

from __future__ import annotations

from collections.abc import Callable, Iterator

import numpy as np

from .errors import ConfigError, DimensionError, NumericError


class Tensor:
    """A dense float64 array plus an optional gradient and tape node."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def backward(self) -> None:
        """Reverse-accumulate gradients from this scalar output."""
        if self.data.size != 1:
            raise DimensionError(f"backward() needs a scalar output, got shape {self.shape}")
        order = _topo_order(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return hadamard(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


def _topo_order(root: Tensor) -> list[Tensor]:
    # Iterative postorder DFS; recursion would overflow on long tapes.
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


_grad_enabled = True


class no_grad:
    """Context manager disabling tape construction (for evaluation passes)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _node(data: np.ndarray, parents: tuple[Tensor, ...]) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = _grad_enabled and any(p.requires_grad for p in parents)
    if out.requires_grad:
        # only gradient-carrying parents matter for the backward traversal
        out._parents = tuple(p for p in parents if p.requires_grad)
    else:
        out._parents = ()
    out._backward = None
    return out


def _acc(t: Tensor, g: np.ndarray) -> None:
    t.grad = g if t.grad is None else t.grad + g


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a (m,k) and b (k,n)."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(f"matmul needs 2-d tensors, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: inner dimensions of {a.shape} and {b.shape} disagree")
    out = _node(np.dot(a.data, b.data), (a, b))
    if out.requires_grad:
        def _bw():
            g = out.grad
            if a.requires_grad:
                _acc(a, np.dot(g, b.data.T))
            if b.requires_grad:
                _acc(b, np.dot(a.data.T, g))
        out._backward = _bw
    return out


def matvec(a: Tensor, x: Tensor) -> Tensor:
    """Matrix-vector product of a (m,k) and x (k,)."""
    if a.data.ndim != 2 or x.data.ndim != 1:
        raise DimensionError(f"matvec needs (m,k) and (k,), got {a.shape} and {x.shape}")
    if a.shape[1] != x.shape[0]:
        raise DimensionError(f"matvec: inner dimensions of {a.shape} and {x.shape} disagree")
    out = _node(np.dot(a.data, x.data), (a, x))
    if out.requires_grad:
        def _bw():
            g = out.grad
            if a.requires_grad:
                _acc(a, g.reshape(-1, 1) * x.data.reshape(1, -1))
            if x.requires_grad:
                _acc(x, np.dot(a.data.T, g))
        out._backward = _bw
    return out


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"transpose needs a 2-d tensor, got {a.shape}")
    out = _node(np.ascontiguousarray(a.data.T), (a,))
    if out.requires_grad:
        def _bw():
            _acc(a, out.grad.T)
        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# Elementwise and shape ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)
    out = _node(a.data + b.data, (a, b))
    if out.requires_grad:
        def _bw():
            g = out.grad
            if a.requires_grad:
                _acc(a, g)
            if b.requires_grad:
                _acc(b, g)
        out._backward = _bw
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("sub", a, b)
    out = _node(a.data - b.data, (a, b))
    if out.requires_grad:
        def _bw():
            g = out.grad
            if a.requires_grad:
                _acc(a, g)
            if b.requires_grad:
                _acc(b, -g)
        out._backward = _bw
    return out


def add_n(tensors: list[Tensor]) -> Tensor:
    """Sum of same-shaped tensors."""
    if not tensors:
        raise DimensionError("add_n needs at least one tensor")
    first = tensors[0]
    for t in tensors[1:]:
        _check_same_shape("add_n", first, t)
    total = first.data.copy()
    for t in tensors[1:]:
        total += t.data
    out = _node(total, tuple(tensors))
    if out.requires_grad:
        def _bw():
            g = out.grad
            for t in tensors:
                if t.requires_grad:
                    _acc(t, g)
        out._backward = _bw
    return out


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    out = _node(a.data * factor, (a,))
    if out.requires_grad:
        def _bw():
            _acc(a, out.grad * factor)
        out._backward = _bw
    return out


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("hadamard", a, b)
    out = _node(a.data * b.data, (a, b))
    if out.requires_grad:
        def _bw():
            g = out.grad
            if a.requires_grad:
                _acc(a, g * b.data)
            if b.requires_grad:
                _acc(b, g * a.data)
        out._backward = _bw
    return out


def add_rowvec(m: Tensor, b: Tensor) -> Tensor:
    """Add a (n,) row vector to every row of a (r,n) matrix."""
    if m.data.ndim != 2 or b.data.ndim != 1 or m.shape[1] != b.shape[0]:
        raise DimensionError(f"add_rowvec: shapes {m.shape} and {b.shape} incompatible")
    out = _node(m.data + b.data, (m, b))
    if out.requires_grad:
        def _bw():
            g = out.grad
            if m.requires_grad:
                _acc(m, g)
            if b.requires_grad:
                _acc(b, g.sum(0))
        out._backward = _bw
    return out


def concat(*tensors: Tensor) -> Tensor:
    """Concatenate 1-d tensors."""
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    for t in tensors:
        if t.data.ndim != 1:
            raise DimensionError(f"concat needs 1-d tensors, got shape {t.shape}")
    out = _node(np.concatenate([t.data for t in tensors]), tuple(tensors))
    if out.requires_grad:
        sizes = [t.data.shape[0] for t in tensors]
        def _bw():
            g = out.grad
            offset = 0
            for t, n in zip(tensors, sizes):
                if t.requires_grad:
                    _acc(t, g[offset:offset + n])
                offset += n
        out._backward = _bw
    return out


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two matrices along columns."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[0] != b.shape[0]:
        raise DimensionError(f"concat_cols: shapes {a.shape} and {b.shape} incompatible")
    out = _node(np.concatenate([a.data, b.data], axis=1), (a, b))
    if out.requires_grad:
        na = a.shape[1]
        def _bw():
            g = out.grad
            if a.requires_grad:
                _acc(a, g[:, :na])
            if b.requires_grad:
                _acc(b, g[:, na:])
        out._backward = _bw
    return out


def slice1d(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous slice of a 1-d tensor."""
    if a.data.ndim != 1:
        raise DimensionError(f"slice1d needs a 1-d tensor, got shape {a.shape}")
    n = a.shape[0]
    if not (0 <= start <= stop <= n):
        raise DimensionError(f"slice1d: [{start}:{stop}] out of range for length {n}")
    out = _node(a.data[start:stop].copy(), (a,))
    if out.requires_grad:
        def _bw():
            g = np.zeros_like(a.data)
            g[start:stop] = out.grad
            _acc(a, g)
        out._backward = _bw
    return out


def flatten(a: Tensor) -> Tensor:
    """Row-major flattening to a 1-d tensor."""
    return reshape(a, (a.data.size,))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Row-major reshape; total size must be preserved."""
    if int(np.prod(shape)) != a.data.size:
        raise DimensionError(f"cannot reshape {a.shape} to {shape}")
    out = _node(a.data.reshape(shape).copy(), (a,))
    if out.requires_grad:
        def _bw():
            _acc(a, out.grad.reshape(a.data.shape))
        out._backward = _bw
    return out


def sum_all(a: Tensor) -> Tensor:
    """Sum of all entries, as a scalar tensor."""
    out = _node(np.asarray(a.data.sum()), (a,))
    if out.requires_grad:
        def _bw():
            _acc(a, np.full_like(a.data, float(out.grad)))
        out._backward = _bw
    return out


def relu(a: Tensor) -> Tensor:
    out = _node(np.maximum(a.data, 0.0), (a,))
    if out.requires_grad:
        def _bw():
            _acc(a, out.grad * (a.data > 0.0))
        out._backward = _bw
    return out


def tanh(a: Tensor) -> Tensor:
    out = _node(np.tanh(a.data), (a,))
    if out.requires_grad:
        def _bw():
            _acc(a, out.grad * (1.0 - out.data * out.data))
        out._backward = _bw
    return out


def sigmoid(a: Tensor) -> Tensor:
    out = _node(1.0 / (1.0 + np.exp(-a.data)), (a,))
    if out.requires_grad:
        def _bw():
            _acc(a, out.grad * out.data * (1.0 - out.data))
        out._backward = _bw
    return out


def dropout(a: Tensor, p: float, seed: int, mode: str) -> Tensor:
    """Inverted dropout. In 'eval' mode this is the identity.

    The mask is a pure function of (p, seed, shape), so results are
    reproducible across runs.
    """
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if mode not in ("train", "eval"):
        raise ConfigError(f"dropout mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval":
        return a
    rng = np.random.default_rng(seed)
    mask = (rng.random(a.shape) >= p) / (1.0 - p)
    out = _node(a.data * mask, (a,))
    if out.requires_grad:
        def _bw():
            _acc(a, out.grad * mask)
        out._backward = _bw
    return out


def grad_reverse(a: Tensor, lam: float) -> Tensor:
    """Identity forward; backward multiplies the gradient by -lam."""
    lam = float(lam)
    if lam < 0.0:
        raise ConfigError(f"grad_reverse weight must be >= 0, got {lam}")
    out = _node(a.data, (a,))
    if out.requires_grad:
        def _bw():
            _acc(a, out.grad * (-lam))
        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# Reductions and normalizations
# ---------------------------------------------------------------------------

def softmax(a: Tensor) -> Tensor:
    """Stable softmax of a 1-d tensor."""
    if a.data.ndim != 1 or a.shape[0] < 1:
        raise DimensionError(f"softmax needs a non-empty 1-d tensor, got shape {a.shape}")
    shifted = a.data - np.max(a.data)
    e = np.exp(shifted)
    y = e / e.sum()
    out = _node(y, (a,))
    if out.requires_grad:
        def _bw():
            g = out.grad
            _acc(a, y * (g - np.dot(g, y)))
        out._backward = _bw
    return out


def row_softmax(a: Tensor) -> Tensor:
    """Stable softmax applied to each row of a 2-d tensor."""
    if a.data.ndim != 2 or a.shape[1] < 1:
        raise DimensionError(f"row_softmax needs a non-empty 2-d tensor, got shape {a.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)
    out = _node(y, (a,))
    if out.requires_grad:
        def _bw():
            g = out.grad
            dot = (g * y).sum(axis=1, keepdims=True)
            _acc(a, y * (g - dot))
        out._backward = _bw
    return out


def mse(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error between two 1-d tensors, as a scalar tensor."""
    if pred.data.ndim != 1 or target.data.ndim != 1:
        raise DimensionError(f"mse needs 1-d tensors, got {pred.shape} and {target.shape}")
    _check_same_shape("mse", pred, target)
    diff = pred.data - target.data
    n = diff.shape[0]
    out = _node(np.asarray((diff @ diff) / n), (pred, target))
    if out.requires_grad:
        def _bw():
            g = float(out.grad)
            if pred.requires_grad:
                _acc(pred, (2.0 * g / n) * diff)
            if target.requires_grad:
                _acc(target, (-2.0 * g / n) * diff)
        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# Parameter store and gradient checking
# ---------------------------------------------------------------------------

class ParamStore:
    """Named parameter tensors with lexicographic iteration order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, values) -> Tensor:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        t = Tensor(values, requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for name in self.names():
            yield name, self._params[name]

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.grad = None

    def copy_values(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, t in self.items():
            if name not in values:
                raise ConfigError(f"missing value for parameter {name!r}")
            arr = np.asarray(values[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise DimensionError(
                    f"parameter {name!r}: stored shape {arr.shape} != expected {t.data.shape}")
            t.data = np.ascontiguousarray(arr)
        extra = set(values) - set(self._params)
        if extra:
            raise ConfigError(f"unknown parameters in checkpoint: {sorted(extra)}")


def gradient_check(f: Callable[[ParamStore], Tensor], params: ParamStore,
                   eps: float = 1e-5) -> float:
    """Max relative error between recorded and central-difference gradients.

    Perturbs every entry of every parameter by +/-eps and compares the
    finite-difference slope to the gradient recorded by one backward pass.
    """
    if eps <= 0:
        raise ConfigError(f"eps must be positive, got {eps}")

    def _value(t: Tensor) -> float:
        val = t.item()
        if not np.isfinite(val):
            raise NumericError("function value is not finite during gradient check")
        return val

    params.zero_grads()
    out = f(params)
    _value(out)
    out.backward()
    analytic = {name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
                for name, t in params.items()}
    params.zero_grads()

    worst = 0.0
    with no_grad():
        for name, t in params.items():
            flat = t.data.ravel()
            aflat = analytic[name].ravel()
            for i in range(flat.shape[0]):
                orig = flat[i]
                flat[i] = orig + eps
                fp = _value(f(params))
                flat[i] = orig - eps
                fm = _value(f(params))
                flat[i] = orig
                numeric = (fp - fm) / (2.0 * eps)
                a = aflat[i]
                rel = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
                if rel > worst:
                    worst = rel
    return worst
