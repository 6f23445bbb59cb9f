"""Reverse-mode automatic differentiation on dense float64 arrays.

A small tape-based engine: every operation returns a new `Tensor` holding the
result, the parents that require gradients, and a closure that routes the
upstream gradient to those parents.  `backward` topologically sorts the graph
once and replays the closures in reverse.  All arrays are float64; broadcasting
follows numpy rules, with gradients summed back to the parent shape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Tensor",
    "backward",
    "no_grad",
    "detach",
    "add",
    "sub",
    "mul",
    "scale",
    "matmul",
    "affine",
    "relu",
    "sigmoid",
    "tanh",
    "exp",
    "log",
    "clip",
    "softmax",
    "log_softmax",
    "mean",
    "total",
    "concat",
    "AutodiffError",
    "NonFiniteGraphError",
    "GradCheckReport",
    "check_gradients",
    "check_gradients_params",
    "AdamState",
    "adam_init",
    "adam_step",
    "Adam",
]


class AutodiffError(Exception):
    """Base class for engine errors."""


class NonFiniteGraphError(AutodiffError):
    """Raised when a node in the graph holds NaN or infinite entries."""


_GRAD_ENABLED = [True]


class no_grad:
    """Context manager: ops executed inside build no graph."""

    def __enter__(self):
        self._prev = _GRAD_ENABLED[0]
        _GRAD_ENABLED[0] = False
        return self

    def __exit__(self, *exc):
        _GRAD_ENABLED[0] = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None, op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __truediv__(self, c):
        return scale(self, 1.0 / float(c))


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _needs(x) -> bool:
    return isinstance(x, Tensor) and x.requires_grad


def _accum(t: Tensor, g: np.ndarray) -> None:
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum `g` over broadcast dimensions so it matches `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _node(data, parents, bk, op) -> Tensor:
    if _GRAD_ENABLED[0] and parents:
        return Tensor(data, requires_grad=True, _parents=parents, _backward=bk, op=op)
    return Tensor(data, op=op)


def detach(x: Tensor) -> Tensor:
    """A view of `x` cut from the graph; gradients never flow past it."""
    return Tensor(x.data, op="detach")


def add(a, b):
    ad, bd = _data(a), _data(b)
    na, nb = _needs(a), _needs(b)
    parents = tuple(t for t, n in ((a, na), (b, nb)) if n)

    def bk(g):
        if na:
            _accum(a, _unbroadcast(g, ad.shape))
        if nb:
            _accum(b, _unbroadcast(g, bd.shape))

    return _node(ad + bd, parents, bk, "add")


def sub(a, b):
    ad, bd = _data(a), _data(b)
    na, nb = _needs(a), _needs(b)
    parents = tuple(t for t, n in ((a, na), (b, nb)) if n)

    def bk(g):
        if na:
            _accum(a, _unbroadcast(g, ad.shape))
        if nb:
            _accum(b, _unbroadcast(-g, bd.shape))

    return _node(ad - bd, parents, bk, "sub")


def mul(a, b):
    ad, bd = _data(a), _data(b)
    na, nb = _needs(a), _needs(b)
    parents = tuple(t for t, n in ((a, na), (b, nb)) if n)

    def bk(g):
        if na:
            _accum(a, _unbroadcast(g * bd, ad.shape))
        if nb:
            _accum(b, _unbroadcast(g * ad, bd.shape))

    return _node(ad * bd, parents, bk, "mul")


def scale(a, c: float):
    c = float(c)
    na = _needs(a)

    def bk(g):
        _accum(a, g * c)

    return _node(_data(a) * c, (a,) if na else (), bk, "scale")


def matmul(a, b):
    ad, bd = _data(a), _data(b)
    na, nb = _needs(a), _needs(b)
    parents = tuple(t for t, n in ((a, na), (b, nb)) if n)

    def bk(g):
        if na:
            _accum(a, g @ bd.T)
        if nb:
            _accum(b, ad.T @ g)

    return _node(ad @ bd, parents, bk, "matmul")


def affine(x, w, b):
    """x @ w + b in one node (bias gradient sums over rows)."""
    xd, wd = _data(x), _data(w)
    nx, nw, nb = _needs(x), _needs(w), _needs(b)
    parents = tuple(t for t, n in ((x, nx), (w, nw), (b, nb)) if n)

    def bk(g):
        if nx:
            _accum(x, g @ wd.T)
        if nw:
            _accum(w, xd.T @ g)
        if nb:
            _accum(b, g.sum(axis=0))

    return _node(xd @ wd + _data(b), parents, bk, "affine")


def relu(x):
    xd = _data(x)
    out = np.maximum(xd, 0.0)

    def bk(g):
        _accum(x, g * (xd > 0.0))

    return _node(out, (x,) if _needs(x) else (), bk, "relu")


def sigmoid(x):
    xd = _data(x)
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bk(g):
        _accum(x, g * out * (1.0 - out))

    return _node(out, (x,) if _needs(x) else (), bk, "sigmoid")


def tanh(x):
    out = np.tanh(_data(x))

    def bk(g):
        _accum(x, g * (1.0 - out * out))

    return _node(out, (x,) if _needs(x) else (), bk, "tanh")


def exp(x):
    out = np.exp(_data(x))

    def bk(g):
        _accum(x, g * out)

    return _node(out, (x,) if _needs(x) else (), bk, "exp")


def log(x):
    xd = _data(x)
    out = np.log(xd)

    def bk(g):
        _accum(x, g / xd)

    return _node(out, (x,) if _needs(x) else (), bk, "log")


def clip(x, lo: float, hi: float):
    """Clamp to [lo, hi]; gradient passes through where lo <= x <= hi."""
    xd = _data(x)
    out = np.clip(xd, lo, hi)
    inside = (xd >= lo) & (xd <= hi)

    def bk(g):
        _accum(x, g * inside)

    return _node(out, (x,) if _needs(x) else (), bk, "clip")


def softmax(x, axis: int = -1):
    xd = _data(x)
    z = xd - xd.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bk(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        _accum(x, out * (g - dot))

    return _node(out, (x,) if _needs(x) else (), bk, "softmax")


def log_softmax(x, axis: int = -1):
    xd = _data(x)
    z = xd - xd.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    sm = np.exp(out)

    def bk(g):
        _accum(x, g - sm * g.sum(axis=axis, keepdims=True))

    return _node(out, (x,) if _needs(x) else (), bk, "log_softmax")


def mean(x):
    xd = _data(x)
    n = xd.size

    def bk(g):
        _accum(x, np.full(xd.shape, float(g) / n))

    return _node(xd.mean(), (x,) if _needs(x) else (), bk, "mean")


def total(x):
    xd = _data(x)

    def bk(g):
        _accum(x, np.full(xd.shape, float(g)))

    return _node(xd.sum(), (x,) if _needs(x) else (), bk, "total")


def concat(tensors, axis: int = 1):
    datas = [_data(t) for t in tensors]
    sizes = [d.shape[axis] for d in datas]
    needs = [_needs(t) for t in tensors]
    parents = tuple(t for t, n in zip(tensors, needs) if n)
    offsets = np.cumsum([0] + sizes)

    def bk(g):
        for t, n, lo, hi in zip(tensors, needs, offsets[:-1], offsets[1:]):
            if n:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _accum(t, g[tuple(sl)])

    return _node(np.concatenate(datas, axis=axis), parents, bk, "concat")


def _toposort(root: Tensor) -> list[Tensor]:
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
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate `.grad` on every graph leaf reachable from the scalar `loss`.

    Raises on a non-scalar loss or if any node's value is non-finite.
    """
    if loss.data.size != 1:
        raise AutodiffError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    order = _toposort(loss)
    for node in order:
        if not np.isfinite(node.data).all():
            raise NonFiniteGraphError(f"non-finite values in node op={node.op!r}")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# finite-difference gradient checking


@dataclass
class GradCheckReport:
    analytic: np.ndarray
    numeric: np.ndarray
    rel_errors: np.ndarray
    max_rel_error: float

    def ok(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error <= tol


def _rel_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def check_gradients(fn, point, step: float = 1e-5) -> GradCheckReport:
    """Compare the tape gradient of scalar-valued `fn` against central differences.

    `fn` maps one Tensor to a scalar Tensor.  The numeric pass perturbs one
    coordinate at a time; non-finite values at any evaluation abort the check.
    """
    base = np.array(_data(point), dtype=np.float64)
    p = Tensor(base, requires_grad=True)
    out = fn(p)
    if out.data.size != 1:
        raise AutodiffError("check_gradients requires a scalar-valued function")
    backward(out)
    analytic = p.grad.copy() if p.grad is not None else np.zeros_like(base)

    numeric = np.zeros_like(base)
    flat = base.ravel()
    num_flat = numeric.ravel()
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(fn(Tensor(base)).data)
            flat[i] = orig - step
            f_minus = float(fn(Tensor(base)).data)
            flat[i] = orig
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise NonFiniteGraphError(f"non-finite value at perturbed coordinate {i}")
            num_flat[i] = (f_plus - f_minus) / (2.0 * step)

    rel = _rel_errors(analytic, numeric)
    return GradCheckReport(analytic, numeric, rel, float(rel.max()) if rel.size else 0.0)


def check_gradients_params(loss_fn, params, step: float = 1e-5) -> GradCheckReport:
    """Finite-difference check over a list of parameter Tensors used by `loss_fn()`.

    The closure must rebuild its graph from the current parameter values on
    every call.  Returns flattened analytic/numeric gradients over all params.
    """
    for p in params:
        p.zero_grad()
    out = loss_fn()
    if out.data.size != 1:
        raise AutodiffError("check_gradients_params requires a scalar loss")
    backward(out)
    analytic = np.concatenate(
        [(p.grad if p.grad is not None else np.zeros_like(p.data)).ravel() for p in params]
    )

    chunks = []
    with no_grad():
        for p in params:
            flat = p.data.ravel()
            num = np.zeros_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                f_plus = float(loss_fn().data)
                flat[i] = orig - step
                f_minus = float(loss_fn().data)
                flat[i] = orig
                if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                    raise NonFiniteGraphError("non-finite loss during finite differencing")
                num[i] = (f_plus - f_minus) / (2.0 * step)
            chunks.append(num)
    numeric = np.concatenate(chunks)
    rel = _rel_errors(analytic, numeric)
    return GradCheckReport(analytic, numeric, rel, float(rel.max()) if rel.size else 0.0)


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(
        m=[np.zeros_like(p.data) for p in params],
        v=[np.zeros_like(p.data) for p in params],
        step=0,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def adam_step(params, grads, state: AdamState, lr: float) -> AdamState:
    """One bias-corrected Adam update, in place on `params`.

    `grads` entries may be None (treated as zero: moments decay, and from a
    fresh state the parameters are untouched).  Non-finite gradients raise.
    """
    if len(params) != len(state.m) or len(grads) != len(params):
        raise AutodiffError("adam_step: params/grads/state length mismatch")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.data)
        else:
            g = np.asarray(g, dtype=np.float64)
            if g.shape != p.data.shape:
                raise AutodiffError(f"adam_step: gradient shape {g.shape} != param shape {p.data.shape}")
            if not np.isfinite(g).all():
                raise NonFiniteGraphError("adam_step: non-finite gradient")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


class Adam:
    """Convenience wrapper binding an AdamState to a fixed parameter list."""

    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.state = adam_init(self.params, beta1, beta2, eps)

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state, self.lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
