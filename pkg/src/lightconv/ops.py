"""Convolution family, activations, pooling, embeddings and linear maps.

Every op is a fused forward with a hand-written gradient rule recorded on the
tape. Convolutions are correlations (no kernel flip). Inputs are ``(c, t)``
feature maps, optionally with a leading batch axis ``(n, c, t)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf, expit

from .errors import ConfigError, ConfigWarning, DimensionError, GeometryError, IdRangeError
from .tensor import Tensor, make

PADDINGS = ("same", "causal", "none")


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: int
    groups: int = 1
    stride: int = 1
    padding: str = "same"

    def __post_init__(self):
        for name in ("in_channels", "out_channels", "kernel", "groups", "stride"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ConfigError(
                f"groups={self.groups} must divide in_channels={self.in_channels} "
                f"and out_channels={self.out_channels}"
            )
        if self.padding not in PADDINGS:
            raise ConfigError(f"padding must be one of {PADDINGS}, got {self.padding!r}")

    @property
    def is_depthwise(self) -> bool:
        return self.groups == self.in_channels == self.out_channels

    def pads(self) -> tuple[int, int]:
        return pad_amounts(self.kernel, self.padding)

    def out_length(self, t: int) -> int:
        return out_length(t, self.kernel, self.padding, self.stride)


def pad_amounts(k: int, padding: str) -> tuple[int, int]:
    """Zero padding (left, right) for a kernel of width ``k``."""
    if padding == "same":
        left = (k - 1) // 2
        return left, k - 1 - left
    if padding == "causal":
        return k - 1, 0
    if padding == "none":
        return 0, 0
    raise ConfigError(f"padding must be one of {PADDINGS}, got {padding!r}")


def out_length(t: int, k: int, padding: str, stride: int = 1) -> int:
    left, right = pad_amounts(k, padding)
    span = t + left + right - k
    if span < 0:
        raise GeometryError(f"kernel {k} with padding {padding!r} leaves no output for length {t}")
    return span // stride + 1


@dataclass
class ConvParams:
    """Filters for one convolution.

    ``kind`` fixes the filter layout: standard ``(out, c/g, k)``,
    depthwise ``(c, k)``, pointwise ``(out, c)``.
    """

    spec: ConvSpec
    filters: Tensor
    bias: Tensor | None = None
    kind: str = "standard"

    def __post_init__(self):
        s = self.spec
        if self.kind == "standard":
            expected = (s.out_channels, s.in_channels // s.groups, s.kernel)
        elif self.kind == "depthwise":
            if not s.is_depthwise:
                raise ConfigError("depthwise params need groups == in_channels == out_channels")
            expected = (s.in_channels, s.kernel)
        elif self.kind == "pointwise":
            if s.kernel != 1 or s.groups != 1:
                raise ConfigError("pointwise params need kernel=1, groups=1")
            expected = (s.out_channels, s.in_channels)
        else:
            raise ConfigError(f"unknown conv kind {self.kind!r}")
        if self.filters.shape != expected:
            raise DimensionError(f"{self.kind} filters have shape {self.filters.shape}, expected {expected}")
        if self.bias is not None and self.bias.shape != (s.out_channels,):
            raise DimensionError(f"bias shape {self.bias.shape} != ({s.out_channels},)")

    def tensors(self) -> list[Tensor]:
        return [self.filters] if self.bias is None else [self.filters, self.bias]


@dataclass
class BottleneckParams:
    """Pointwise ``c -> c`` factored as ``c -> b -> c``."""

    down: ConvParams
    up: ConvParams

    def __post_init__(self):
        c = self.down.spec.in_channels
        b = self.down.spec.out_channels
        if self.up.spec.in_channels != b or self.up.spec.out_channels != c:
            raise DimensionError(
                f"bottleneck mismatch: down {c}->{b}, up {self.up.spec.in_channels}->{self.up.spec.out_channels}"
            )
        if 2 * b >= c:
            warnings.warn(f"bottleneck b={b} with c={c}: 2b >= c does not reduce parameters", ConfigWarning, stacklevel=3)

    @property
    def bottleneck(self) -> int:
        return self.down.spec.out_channels


def _batched(x: Tensor) -> tuple[np.ndarray, bool]:
    if x.ndim == 2:
        return x.data[None], True
    if x.ndim == 3:
        return x.data, False
    raise DimensionError(f"expected a (c, t) or (n, c, t) feature map, got shape {x.shape}")


def conv1d(x: Tensor, params: ConvParams) -> Tensor:
    """Grouped 1-D correlation: ``(c, t) -> (out, t')``."""
    if params.kind == "depthwise":
        return depthwise_conv1d(x, params.filters, params.spec.padding)
    if params.kind == "pointwise":
        return pointwise_conv1d(x, params.filters, params.bias)
    spec = params.spec
    x3, squeeze = _batched(x)
    n, c, t = x3.shape
    if c != spec.in_channels:
        raise DimensionError(f"conv1d expects {spec.in_channels} input channels, got {c}")
    k, g, s = spec.kernel, spec.groups, spec.stride
    tp = spec.out_length(t)
    left, right = spec.pads()
    cg, og = c // g, spec.out_channels // g

    xp = np.pad(x3, ((0, 0), (0, 0), (left, right)))
    win = sliding_window_view(xp, k, axis=2)[:, :, : (tp - 1) * s + 1 : s, :]
    cols = win.reshape(n, g, cg, tp, k).transpose(0, 1, 3, 2, 4).reshape(n, g, tp, cg * k)
    w = params.filters.data.reshape(g, og, cg * k)
    y = np.matmul(cols, w.transpose(0, 2, 1)).transpose(0, 1, 3, 2).reshape(n, spec.out_channels, tp)
    if params.bias is not None:
        y = y + params.bias.data[:, None]

    def backward(gy):
        gy3 = gy[None] if squeeze else gy
        gyg = gy3.reshape(n, g, og, tp).transpose(0, 1, 3, 2)
        dw = np.einsum("ngtc,ngto->goc", cols, gyg).reshape(spec.out_channels, cg, k)
        dcols = np.matmul(gyg, w).reshape(n, g, tp, cg, k).transpose(0, 1, 3, 2, 4).reshape(n, c, tp, k)
        dxp = np.zeros_like(xp)
        for j in range(k):
            dxp[:, :, j : j + (tp - 1) * s + 1 : s] += dcols[..., j]
        dx = dxp[:, :, left : left + t]
        grads = [dx[0] if squeeze else dx, dw]
        if params.bias is not None:
            grads.append(gy3.sum(axis=(0, 2)))
        return grads

    out = y[0] if squeeze else y
    return make(out, [x, *params.tensors()], backward)


def depthwise_conv1d(x: Tensor, kernels: Tensor, padding: str = "same") -> Tensor:
    """One kernel per channel (grouped conv with g = c), stride 1, no bias."""
    x3, squeeze = _batched(x)
    n, c, t = x3.shape
    if kernels.ndim != 2 or kernels.shape[0] != c:
        raise DimensionError(f"depthwise kernels {kernels.shape} do not match {c} input channels")
    k = kernels.shape[1]
    tp = out_length(t, k, padding)
    left, right = pad_amounts(k, padding)
    xp = np.pad(x3, ((0, 0), (0, 0), (left, right)))
    w = kernels.data
    y = np.zeros((n, c, tp))
    for j in range(k):
        y += w[:, j, None] * xp[:, :, j : j + tp]

    def backward(gy):
        gy3 = gy[None] if squeeze else gy
        dw = np.empty_like(w)
        dxp = np.zeros_like(xp)
        for j in range(k):
            dw[:, j] = np.einsum("nct,nct->c", gy3, xp[:, :, j : j + tp])
            dxp[:, :, j : j + tp] += gy3 * w[:, j, None]
        dx = dxp[:, :, left : left + t]
        return dx[0] if squeeze else dx, dw

    return make(y[0] if squeeze else y, (x, kernels), backward)


def pointwise_conv1d(x: Tensor, w: Tensor, bias: Tensor | None = None) -> Tensor:
    """Kernel-1 convolution: ``w @ x`` at every timestep."""
    if x.ndim not in (2, 3):
        raise DimensionError(f"expected a (c, t) or (n, c, t) feature map, got shape {x.shape}")
    if w.ndim != 2 or w.shape[1] != x.shape[-2]:
        raise DimensionError(f"pointwise weight {w.shape} does not match {x.shape[-2]} input channels")
    xd, wd = x.data, w.data
    y = np.matmul(wd, xd)
    if bias is not None:
        if bias.shape != (wd.shape[0],):
            raise DimensionError(f"bias shape {bias.shape} != ({wd.shape[0]},)")
        y = y + bias.data[:, None]

    def backward(g):
        dx = np.matmul(wd.T, g)
        dw = g @ xd.T if xd.ndim == 2 else np.einsum("not,nct->oc", g, xd)
        if bias is None:
            return dx, dw
        db = g.sum(axis=-1)
        return dx, dw, db if db.ndim == 1 else db.sum(axis=0)

    parents = (x, w) if bias is None else (x, w, bias)
    return make(y, parents, backward)


def bottleneck_pointwise(x: Tensor, p: BottleneckParams) -> Tensor:
    """Down-project to ``b`` channels, then up-project back to ``c``."""
    if x.shape[-2] != p.down.spec.in_channels:
        raise DimensionError(f"bottleneck expects {p.down.spec.in_channels} channels, got {x.shape[-2]}")
    h = pointwise_conv1d(x, p.down.filters, p.down.bias)
    return pointwise_conv1d(h, p.up.filters, p.up.bias)


# ---------------------------------------------------------------------------
# activations

ACTIVATIONS = ("relu", "leaky_relu", "elu", "gelu", "sigmoid", "tanh", "glu")
_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu_value(x: np.ndarray) -> np.ndarray:
    """Exact GELU, ``x * Phi(x)`` with Phi from erf."""
    return x * 0.5 * (1.0 + erf(x * _INV_SQRT2))


def activate(x: Tensor, kind: str, *, slope: float = 0.01, alpha: float = 1.0) -> Tensor:
    xd = x.data
    if kind == "relu":
        on = xd > 0
        return make(np.where(on, xd, 0.0), (x,), lambda g: (g * on,))
    if kind == "leaky_relu":
        d = np.where(xd > 0, 1.0, slope)
        return make(xd * d, (x,), lambda g: (g * d,))
    if kind == "elu":
        ex = np.exp(np.minimum(xd, 0.0))
        d = np.where(xd > 0, 1.0, alpha * ex)
        return make(np.where(xd > 0, xd, alpha * (ex - 1.0)), (x,), lambda g: (g * d,))
    if kind == "gelu":
        cdf = 0.5 * (1.0 + erf(xd * _INV_SQRT2))
        pdf = _INV_SQRT2PI * np.exp(-0.5 * xd * xd)
        return make(xd * cdf, (x,), lambda g: (g * (cdf + xd * pdf),))
    if kind == "sigmoid":
        s = expit(xd)
        return make(s, (x,), lambda g: (g * s * (1.0 - s),))
    if kind == "tanh":
        th = np.tanh(xd)
        return make(th, (x,), lambda g: (g * (1.0 - th * th),))
    if kind == "glu":
        return _glu(x)
    raise ConfigError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def _glu(x: Tensor) -> Tensor:
    axis = 0 if x.ndim == 1 else x.ndim - 2
    c = x.shape[axis]
    if c % 2:
        raise DimensionError(f"glu needs an even channel count, got {c}")
    a, b = np.split(x.data, 2, axis=axis)
    s = expit(b)

    def backward(g):
        return (np.concatenate([g * s, g * a * s * (1.0 - s)], axis=axis),)

    return make(a * s, (x,), backward)


# ---------------------------------------------------------------------------
# pooling, embeddings, linear

def pool_time(x: Tensor, kind: str = "max") -> Tensor:
    """Reduce the last (time) axis. Max routes its gradient to the earliest maximum."""
    if x.ndim < 1 or x.shape[-1] < 1:
        raise DimensionError(f"pool_time needs a non-empty time axis, got shape {x.shape}")
    xd = x.data
    t = xd.shape[-1]
    if kind == "max":
        idx = np.argmax(xd, axis=-1)[..., None]
        out = np.take_along_axis(xd, idx, axis=-1)[..., 0]

        def backward(g):
            dx = np.zeros_like(xd)
            np.put_along_axis(dx, idx, g[..., None], axis=-1)
            return (dx,)

        return make(out, (x,), backward)
    if kind == "avg":
        return make(xd.mean(axis=-1), (x,), lambda g: (np.repeat(g[..., None] / t, t, axis=-1),))
    raise ConfigError(f"pool kind must be 'max' or 'avg', got {kind!r}")


def embedding_lookup(table: Tensor, ids: Sequence[int] | np.ndarray) -> Tensor:
    """Gather rows: ``(V, d)`` table, ids of any shape -> ``ids.shape + (d,)``."""
    idx = np.asarray(ids, dtype=np.int64)
    vocab = table.shape[0]
    bad = (idx < 0) | (idx >= vocab)
    if bad.any():
        raise IdRangeError(f"id {int(idx[bad].flat[0])} out of range for table of {vocab} rows")
    td = table.data

    def backward(g):
        dt = np.zeros_like(td)
        np.add.at(dt, idx, g)
        return (dt,)

    return make(td[idx], (table,), backward)


def linear(x: Tensor, w: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map ``x @ w + bias`` on ``(n, d)`` rows (or a single ``(d,)`` row)."""
    if x.shape[-1] != w.shape[0] or w.ndim != 2 or x.ndim not in (1, 2):
        raise DimensionError(f"linear shape mismatch: x {x.shape}, w {w.shape}")
    xd, wd = x.data, w.data
    y = xd @ wd
    if bias is not None:
        if bias.shape != (wd.shape[1],):
            raise DimensionError(f"bias shape {bias.shape} != ({wd.shape[1]},)")
        y = y + bias.data

    def backward(g):
        dw = np.outer(xd, g) if xd.ndim == 1 else xd.T @ g
        grads = [g @ wd.T, dw]
        if bias is not None:
            grads.append(g if g.ndim == 1 else g.sum(axis=0))
        return grads

    parents = (x, w) if bias is None else (x, w, bias)
    return make(y, parents, backward)
