"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every operation records a closure that maps the output gradient to input
gradients. A fresh tape is built per forward pass and discarded after
:func:`backward`, so nothing leaks between training steps.

>>> w = Tensor(3.0, requires_grad=True)
>>> loss = w * w
>>> backward(loss)
>>> float(w.grad)
6.0
"""
from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import expit

from .errors import ContractError, DimensionError, NonFiniteError

__all__ = [
    "Tensor",
    "tensor",
    "no_grad",
    "grad_enabled",
    "matmul",
    "affine",
    "elementwise",
    "add",
    "sub",
    "mul",
    "scale",
    "activation",
    "sigmoid",
    "tanh",
    "relu",
    "softmax",
    "concat",
    "stack",
    "sum",
    "mean",
    "normalize",
    "scale_shift",
    "reshape",
    "backward",
    "finite_diff_check",
    "GradCheckReport",
]

class _TapeState(threading.local):
    enabled = True


_local = _TapeState()


def grad_enabled() -> bool:
    return _local.enabled


@contextlib.contextmanager
def no_grad():
    """Disable tape recording in the current thread."""
    prev = grad_enabled()
    _local.enabled = False
    try:
        yield
    finally:
        _local.enabled = prev


class Tensor:
    """A float64 array that can sit on the differentiation tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = "leaf"

    @classmethod
    def _from_op(cls, data, parents, backward_fn, op):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.op = op
        if _local.enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward_fn
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"expected a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data.copy())

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=6)}{flag})"

    def __add__(self, other):
        return add(self, _wrap(other, self))

    def __radd__(self, other):
        return add(_wrap(other, self), self)

    def __sub__(self, other):
        return sub(self, _wrap(other, self))

    def __rsub__(self, other):
        return sub(_wrap(other, self), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return _getitem(self, index)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _wrap(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.broadcast_to(np.asarray(value, dtype=np.float64), like.shape))


def _accumulate(node: Tensor, g: np.ndarray) -> None:
    if not node.requires_grad:
        return
    if node.grad is None:
        node.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        node.grad = node.grad + g


def _same_shape(a: Tensor, b: Tensor, what: str) -> None:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"{what}: shape {a.data.shape} does not match {b.data.shape}")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; 1-D operands are treated as row/column vectors."""
    ad, bd = a.data, b.data
    if ad.ndim == 0 or bd.ndim == 0 or ad.ndim > 2 or bd.ndim > 2 or ad.shape[-1] != bd.shape[0]:
        raise DimensionError(f"matmul: cannot multiply shapes {ad.shape} and {bd.shape}")
    out = ad @ bd

    def _back(g):
        if a.requires_grad:
            if bd.ndim == 1:
                ga = np.multiply.outer(g, bd) if ad.ndim == 2 else g * bd
            else:
                ga = g @ bd.T
            _accumulate(a, ga)
        if b.requires_grad:
            if ad.ndim == 1:
                gb = np.multiply.outer(ad, g) if bd.ndim == 2 else g * ad
            else:
                gb = ad.T @ g
            _accumulate(b, gb)

    return Tensor._from_op(out, (a, b), _back, "matmul")


def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight.T + bias`` for a vector ``x`` or a stack of row vectors."""
    xd, wd, bd = x.data, weight.data, bias.data
    if wd.ndim != 2 or xd.ndim not in (1, 2) or xd.shape[-1] != wd.shape[1]:
        raise DimensionError(f"affine: input {xd.shape} incompatible with weight {wd.shape}")
    if bd.shape != (wd.shape[0],):
        raise DimensionError(f"affine: bias {bd.shape} incompatible with weight {wd.shape}")
    out = xd @ wd.T + bd

    def _back(g):
        if x.requires_grad:
            _accumulate(x, g @ wd)
        if weight.requires_grad:
            _accumulate(weight, np.multiply.outer(g, xd) if xd.ndim == 1 else g.T @ xd)
        if bias.requires_grad:
            _accumulate(bias, g if g.ndim == 1 else g.sum(axis=0))

    return Tensor._from_op(out, (x, weight, bias), _back, "affine")


# ---------------------------------------------------------------------------
# pointwise


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")

    def _back(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return Tensor._from_op(a.data + b.data, (a, b), _back, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")

    def _back(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return Tensor._from_op(a.data - b.data, (a, b), _back, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product."""
    _same_shape(a, b, "hadamard")
    ad, bd = a.data, b.data

    def _back(g):
        _accumulate(a, g * bd)
        _accumulate(b, g * ad)

    return Tensor._from_op(ad * bd, (a, b), _back, "hadamard")


_ELEMENTWISE = {"add": add, "sub": sub, "hadamard": mul}


def elementwise(op: str, a: Tensor, b: Tensor) -> Tensor:
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}; expected one of {sorted(_ELEMENTWISE)}") from None
    return fn(a, b)


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)

    def _back(g):
        _accumulate(a, g * factor)

    return Tensor._from_op(a.data * factor, (a,), _back, "scale")


def _check_finite(a: Tensor, op: str) -> None:
    if not np.isfinite(a.data).all():
        raise NonFiniteError(f"{op}: non-finite input")


def sigmoid(a: Tensor) -> Tensor:
    _check_finite(a, "sigmoid")
    out = expit(a.data)

    def _back(g):
        _accumulate(a, g * out * (1.0 - out))

    return Tensor._from_op(out, (a,), _back, "sigmoid")


def tanh(a: Tensor) -> Tensor:
    _check_finite(a, "tanh")
    out = np.tanh(a.data)

    def _back(g):
        _accumulate(a, g * (1.0 - out * out))

    return Tensor._from_op(out, (a,), _back, "tanh")


def relu(a: Tensor, keep=None) -> Tensor:
    """Elementwise ReLU; entries where ``keep`` is true pass through unchanged."""
    # subgradient at exactly 0 is taken as 0
    _check_finite(a, "relu")
    mask = a.data > 0.0
    if keep is not None:
        mask = mask | np.broadcast_to(keep, a.shape)
    out = np.where(mask, a.data, 0.0)

    def _back(g):
        _accumulate(a, g * mask)

    return Tensor._from_op(out, (a,), _back, "relu")


_ACTIVATIONS = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu}


def activation(op: str, a: Tensor) -> Tensor:
    try:
        fn = _ACTIVATIONS[op]
    except KeyError:
        raise ContractError(f"unknown activation {op!r}; expected one of {sorted(_ACTIVATIONS)}") from None
    return fn(a)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` with max subtraction."""
    if not -a.data.ndim <= axis < max(a.data.ndim, 1):
        raise ContractError(f"softmax: axis {axis} out of range for shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def _back(g):
        _accumulate(a, out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return Tensor._from_op(out, (a,), _back, "softmax")


# ---------------------------------------------------------------------------
# structural


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ContractError("concat: need at least one tensor")
    datas = [t.data for t in tensors]
    try:
        out = np.concatenate(datas, axis=axis)
    except ValueError as exc:
        shapes = ", ".join(str(d.shape) for d in datas)
        raise DimensionError(f"concat along axis {axis}: incompatible shapes {shapes}") from exc
    def _back(g):
        bounds = np.cumsum([d.shape[axis] for d in datas])[:-1]
        for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            _accumulate(t, piece)

    return Tensor._from_op(out, tuple(tensors), _back, "concat")


def stack(tensors: Sequence[Tensor]) -> Tensor:
    """Stack equally shaped tensors along a new leading axis."""
    tensors = list(tensors)
    if not tensors:
        raise ContractError("stack: need at least one tensor")
    shape = tensors[0].data.shape
    for t in tensors[1:]:
        if t.data.shape != shape:
            raise DimensionError(f"stack: shape {t.data.shape} does not match {shape}")
    out = np.stack([t.data for t in tensors])

    def _back(g):
        for t, row in zip(tensors, g):
            _accumulate(t, row)

    return Tensor._from_op(out, tuple(tensors), _back, "stack")


def _getitem(a: Tensor, index) -> Tensor:
    out = np.array(a.data[index], dtype=np.float64)
    shape = a.data.shape

    def _back(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        _accumulate(a, full)

    return Tensor._from_op(out, (a,), _back, "getitem")


def sum(a: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors numpy
    out = np.asarray(a.data.sum(axis=axis), dtype=np.float64)
    shape = a.data.shape

    def _back(g):
        if axis is None:
            _accumulate(a, np.full(shape, float(g)))
        else:
            _accumulate(a, np.broadcast_to(np.expand_dims(g, axis), shape))

    return Tensor._from_op(out, (a,), _back, "sum")


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    return scale(sum(a, axis), 1.0 / n)


def normalize(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Standardize over the last axis: ``(x - mean) / sqrt(var + eps)``."""
    if a.data.shape[-1] < 2:
        raise ContractError(f"normalize: need at least 2 features, got shape {a.shape}")
    inv_m = 1.0 / a.data.shape[-1]
    centered = a.data - np.add.reduce(a.data, axis=-1, keepdims=True) * inv_m
    var = np.add.reduce(centered * centered, axis=-1, keepdims=True) * inv_m
    inv_std = 1.0 / np.sqrt(var + eps)
    out = centered * inv_std

    def _back(g):
        gm = np.add.reduce(g, axis=-1, keepdims=True) * inv_m
        gom = np.add.reduce(g * out, axis=-1, keepdims=True) * inv_m
        _accumulate(a, inv_std * (g - gm - out * gom))

    return Tensor._from_op(out, (a,), _back, "normalize")


def scale_shift(x: Tensor, gain: Tensor, offset: Tensor) -> Tensor:
    """``x * gain + offset`` with the vectors broadcast over leading axes."""
    m = x.data.shape[-1]
    if gain.data.shape != (m,) or offset.data.shape != (m,):
        raise DimensionError(
            f"scale_shift: gain {gain.shape} / offset {offset.shape} do not match last axis of {x.shape}"
        )
    xd, gd = x.data, gain.data
    lead = tuple(range(xd.ndim - 1))

    def _back(g):
        _accumulate(x, g * gd)
        _accumulate(gain, (g * xd).sum(axis=lead) if lead else g * xd)
        _accumulate(offset, g.sum(axis=lead) if lead else g)

    return Tensor._from_op(xd * gd + offset.data, (x, gain, offset), _back, "scale_shift")


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: cannot view {a.shape} as {shape}") from exc
    orig = a.data.shape

    def _back(g):
        _accumulate(a, g.reshape(orig))

    return Tensor._from_op(out, (a,), _back, "reshape")


# ---------------------------------------------------------------------------
# reverse pass


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack_.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every node reachable from the scalar ``loss``.

    Gradients of reachable nodes are reset before propagation, so calling
    this twice on the same graph yields the same result rather than a sum.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    order = _topological_order(loss)
    for node in order:
        node.grad = np.zeros_like(node.data) if node.requires_grad and not node._parents else None
    if not loss.requires_grad:
        return
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# finite-difference oracle


@dataclass
class ParamCheck:
    name: str
    analytic: np.ndarray
    numeric: np.ndarray
    rel_error: np.ndarray
    flagged: list[tuple[int, ...]] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return float(self.rel_error.max()) if self.rel_error.size else 0.0


@dataclass
class GradCheckReport:
    checks: list[ParamCheck]
    step: float
    tolerance: float

    @property
    def max_rel_error(self) -> float:
        return max((c.max_rel_error for c in self.checks), default=0.0)

    @property
    def passed(self) -> bool:
        return all(not c.flagged for c in self.checks)

    def worst(self) -> ParamCheck:
        return max(self.checks, key=lambda c: c.max_rel_error)


def _as_named(params) -> list[tuple[str, Tensor]]:
    if isinstance(params, Mapping):
        return list(params.items())
    if isinstance(params, Tensor):
        return [("param0", params)]
    return [(f"param{i}", p) for i, p in enumerate(params)]


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor] | Iterable[Tensor] | Tensor,
    step: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Compare reverse-mode gradients against central differences.

    ``f`` rebuilds the scalar loss from the current contents of ``params``
    each time it is called. The relative error per entry is
    ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    named = _as_named(params)
    for _, p in named:
        p.requires_grad = True
    loss = f()
    backward(loss)
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for name, p in named
    }
    checks = []
    with no_grad():
        for name, p in named:
            numeric = np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            num_flat = numeric.reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + step
                hi = f().item()
                flat[k] = orig - step
                lo = f().item()
                flat[k] = orig
                num_flat[k] = (hi - lo) / (2.0 * step)
            a = analytic[name]
            denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
            rel = np.abs(a - numeric) / denom
            flagged = [tuple(int(i) for i in idx) for idx in np.argwhere(rel > tolerance)]
            checks.append(ParamCheck(name, a, numeric, rel, flagged))
    return GradCheckReport(checks, step, tolerance)
