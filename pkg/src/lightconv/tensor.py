"""Dense float64 tensors with a reverse-mode tape, plus the base primitives.

Layout convention: feature maps are ``(channels, time)`` row-major; a leading
batch axis ``(n, channels, time)`` is accepted by the convolution family.

Tensors are immutable: the wrapped ndarray is flagged read-only. Only
:class:`Parameter` can be rebound to new values, and only by a trainer.

Randomness comes from ``numpy.random.Generator`` seeded through
:func:`make_rng` (PCG64, whose bit stream numpy keeps stable across platforms).
"""
from __future__ import annotations

import contextlib
import weakref
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, GradientError, NonFiniteError

_grad_enabled = True


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic generator (PCG64) for init and dropout masks."""
    if seed < 0 or seed >= 2**64:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (inference, benchmarks)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class MemoryTracker:
    """High-water mark of live tensor buffer bytes.

    A buffer is the root ndarray behind a tensor's data (views share their
    base's buffer). It is counted once, when the first live tensor refers to
    it, and released when the last such tensor is collected.
    """

    def __init__(self):
        self.live = 0
        self.peak = 0
        self.allocations = 0
        self._buffers: dict[int, list] = {}

    def _acquire(self, arr: np.ndarray) -> int:
        root = arr
        while isinstance(root, np.ndarray) and root.base is not None:
            root = root.base
        key = id(root)
        entry = self._buffers.get(key)
        if entry is None:
            nbytes = root.nbytes if isinstance(root, np.ndarray) else arr.nbytes
            self._buffers[key] = [root, 1, nbytes]
            self.live += nbytes
            self.allocations += 1
            if self.live > self.peak:
                self.peak = self.live
        else:
            entry[1] += 1
        return key

    def _release(self, key: int) -> None:
        entry = self._buffers[key]
        entry[1] -= 1
        if entry[1] == 0:
            self.live -= entry[2]
            del self._buffers[key]


_tracker: MemoryTracker | None = None


@contextlib.contextmanager
def track_memory():
    """Count tensor allocations made inside the block."""
    global _tracker
    prev = _tracker
    _tracker = MemoryTracker()
    try:
        yield _tracker
    finally:
        _tracker = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        _init(self, arr, requires_grad, (), None)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def tolist(self):
        return self.data.tolist()

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf that requires grad."""
        grads = backprop(self, grad)
        for node, g in grads.values():
            if node.requires_grad and node._backward is None:
                node.grad = g if node.grad is None else node.grad + g

    # operator sugar, used sparingly by model code
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


class Parameter(Tensor):
    """A trainable leaf tensor. Training rebinds its data via :meth:`assign`."""

    __slots__ = ()

    def __init__(self, data):
        super().__init__(data, requires_grad=True)

    def assign(self, values: np.ndarray) -> None:
        arr = np.array(values, dtype=np.float64)
        if arr.shape != self.data.shape:
            raise DimensionError(f"cannot assign shape {arr.shape} to parameter of shape {self.data.shape}")
        if not np.isfinite(arr).all():
            raise NonFiniteError("parameter update produced non-finite values")
        arr.flags.writeable = False
        self.data = arr


def _init(t: Tensor, arr: np.ndarray, requires_grad: bool, parents, backward) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite values in tensor of shape {arr.shape}")
    if arr.flags.writeable and arr.flags.owndata:
        arr.flags.writeable = False
    t.data = arr
    t.requires_grad = requires_grad
    t.grad = None
    t._parents = parents
    t._backward = backward
    if _tracker is not None:
        weakref.finalize(t, _tracker._release, _tracker._acquire(arr))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make(arr: np.ndarray, parents: Sequence[Tensor] = (), backward: Callable | None = None) -> Tensor:
    """Wrap an op result; records the tape edge when any parent needs a gradient.

    ``backward(grad)`` must return one gradient (or None) per parent.
    """
    t = Tensor.__new__(Tensor)
    needs = _grad_enabled and backward is not None and any(p.requires_grad for p in parents)
    if needs:
        _init(t, np.asarray(arr, dtype=np.float64), True, tuple(parents), backward)
    else:
        _init(t, np.asarray(arr, dtype=np.float64), False, (), None)
    return t


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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backprop(root: Tensor, grad: np.ndarray | None = None) -> dict[int, tuple[Tensor, np.ndarray]]:
    """Reverse sweep from ``root``; returns ``{id(node): (node, dL/dnode)}`` for every recorded node."""
    if not root.requires_grad:
        raise GradientError("backward called on a tensor that does not require grad")
    seed = np.ones_like(root.data) if grad is None else np.asarray(grad, dtype=np.float64)
    if seed.shape != root.shape:
        raise DimensionError(f"seed gradient shape {seed.shape} != output shape {root.shape}")
    grads: dict[int, tuple[Tensor, np.ndarray]] = {id(root): (root, seed)}
    for node in reversed(_toposort(root)):
        if node._backward is None:
            continue
        entry = grads.get(id(node))
        if entry is None:
            continue
        parent_grads = node._backward(entry[1])
        for p, g in zip(node._parents, parent_grads):
            if g is None or not p.requires_grad:
                continue
            prev = grads.get(id(p))
            grads[id(p)] = (p, g if prev is None else prev[1] + g)
    return grads


# ---------------------------------------------------------------------------
# primitives

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        return g @ bd.T, ad.T @ g

    return make(ad @ bd, (a, b), backward)


def elementwise(x: Tensor, y: Tensor, op: str) -> Tensor:
    if x.shape != y.shape:
        raise DimensionError(f"elementwise {op} shape mismatch: {x.shape} vs {y.shape}")
    xd, yd = x.data, y.data
    if op == "add":
        return make(xd + yd, (x, y), lambda g: (g, g))
    if op == "mul":
        return make(xd * yd, (x, y), lambda g: (g * yd, g * xd))
    raise ConfigError(f"unknown elementwise op {op!r}")


def add(x: Tensor, y: Tensor) -> Tensor:
    return elementwise(x, y, "add")


def mul(x: Tensor, y: Tensor) -> Tensor:
    return elementwise(x, y, "mul")


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> tuple[Tensor, Tensor]:
    """Inverted dropout. Returns ``(output, keep_mask)`` with the mask in {0, 1}."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x, make(np.broadcast_to(np.ones(()), x.shape))
    if rng is None:
        raise ConfigError("training-mode dropout needs an rng")
    keep = (rng.random(x.shape) >= p).astype(np.float64)
    scale = keep / (1.0 - p)
    return make(x.data * scale, (x,), lambda g: (g * scale,)), Tensor(keep)


def scale(x: Tensor, c: float) -> Tensor:
    return make(x.data * c, (x,), lambda g: (g * c,))


def add_constant(x: Tensor, c: np.ndarray) -> Tensor:
    """``x + c`` for a constant array broadcastable to ``x``."""
    return make(x.data + c, (x,), lambda g: (g,))


def mul_constant(x: Tensor, c: np.ndarray) -> Tensor:
    return make(x.data * c, (x,), lambda g: (g * c,))


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return make(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean_all(x: Tensor) -> Tensor:
    return scale(sum_all(x), 1.0 / x.size)


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = np.argsort(axes)
    return make(np.ascontiguousarray(x.data.transpose(axes)), (x,), lambda g: (g.transpose(inv),))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.shape
    return make(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


def concat(xs: Iterable[Tensor], axis: int = 0) -> Tensor:
    xs = list(xs)
    sizes = [t.shape[axis] for t in xs]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make(np.concatenate([t.data for t in xs], axis=axis), xs, backward)


def slice_axis(x: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    src = x.shape

    def backward(g):
        out = np.zeros(src)
        out[idx] = g
        return (out,)

    return make(x.data[idx], (x,), backward)


# ---------------------------------------------------------------------------
# parameter containers

class Module:
    """Base for anything that owns Parameters.

    Parameters are discovered by walking instance attributes (in definition
    order) through nested Modules, dataclasses, lists and dicts. A Parameter
    reachable by two paths (weight tying) is reported once, under its first name.
    """

    def named_parameters(self) -> dict[str, Parameter]:
        out: dict[str, Parameter] = {}
        seen: set[int] = set()
        _walk(self, "", out, seen)
        return out

    def parameters(self) -> list[Parameter]:
        return list(self.named_parameters().values())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def _walk(obj, prefix: str, out: dict, seen: set) -> None:
    import dataclasses

    if isinstance(obj, Parameter):
        if id(obj) not in seen:
            seen.add(id(obj))
            out[prefix] = obj
        return
    if isinstance(obj, Module):
        items = vars(obj).items()
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        items = ((f.name, getattr(obj, f.name)) for f in dataclasses.fields(obj))
    elif isinstance(obj, (list, tuple)):
        items = ((str(i), v) for i, v in enumerate(obj))
    elif isinstance(obj, dict):
        items = obj.items()
    else:
        return
    for name, value in items:
        if isinstance(name, str) and name.startswith("_"):
            continue
        _walk(value, f"{prefix}.{name}" if prefix else str(name), out, seen)
