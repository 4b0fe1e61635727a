"""Residual convolution blocks and the encoder stack.

A block computes ``x + act(conv(dropout(x)))`` where the convolution stage is
one of four variants, ordered from heaviest to lightest:

``conv_glu``
    standard conv ``c -> 2c`` gated back to ``c`` by GLU
``conv_gelu``
    standard conv ``c -> c``, then GELU
``separable_gelu``
    depthwise conv, pointwise ``c -> c``, then GELU
``separable_bottleneck_gelu``
    depthwise conv, pointwise ``c -> b``, pointwise ``b -> c``, then GELU
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, LightConvError
from .ops import (
    BottleneckParams,
    ConvParams,
    ConvSpec,
    activate,
    bottleneck_pointwise,
    conv1d,
    depthwise_conv1d,
    pointwise_conv1d,
)
from .tensor import Module, Parameter, Tensor, add, dropout

VARIANTS = ("conv_glu", "conv_gelu", "separable_gelu", "separable_bottleneck_gelu")
BLOCK_PADDINGS = ("same", "causal")


@dataclass(frozen=True)
class EncoderConfig:
    variant: str
    channels: int
    kernel: int = 3
    n_blocks: int = 1
    bottleneck: int | None = None
    dropout: float = 0.0
    padding: str = "same"
    activation: str = "gelu"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown block variant {self.variant!r}; expected one of {VARIANTS}")
        if self.channels < 1 or self.kernel < 1 or self.n_blocks < 0:
            raise ConfigError("channels and kernel must be positive, n_blocks non-negative")
        if self.padding not in BLOCK_PADDINGS:
            raise ConfigError(f"encoder padding must keep length: one of {BLOCK_PADDINGS}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.variant == "separable_bottleneck_gelu" and not self.bottleneck:
            raise ConfigError("separable_bottleneck_gelu needs a bottleneck dimension b")
        if self.activation == "glu" and self.variant != "conv_glu":
            raise ConfigError("glu activation is only available through the conv_glu variant")


@dataclass
class BlockParams:
    variant: str
    channels: int
    kernel: int
    dropout: float = 0.0
    activation: str = "gelu"
    conv: ConvParams | None = None
    depthwise: ConvParams | None = None
    pointwise: ConvParams | None = None
    pair: BottleneckParams | None = None

    @property
    def bottleneck(self) -> int | None:
        return self.pair.bottleneck if self.pair is not None else None


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Parameter:
    bound = np.sqrt(6.0 / fan_in)
    return Parameter(rng.uniform(-bound, bound, size=shape))


def _standard(rng, c_in, c_out, k, padding) -> ConvParams:
    spec = ConvSpec(c_in, c_out, k, padding=padding)
    return ConvParams(spec, _uniform(rng, (c_out, c_in, k), c_in * k), Parameter(np.zeros(c_out)))


def _depthwise(rng, c, k, padding) -> ConvParams:
    spec = ConvSpec(c, c, k, groups=c, padding=padding)
    return ConvParams(spec, _uniform(rng, (c, k), k), None, kind="depthwise")


def _pointwise(rng, c_in, c_out) -> ConvParams:
    spec = ConvSpec(c_in, c_out, 1)
    return ConvParams(spec, _uniform(rng, (c_out, c_in), c_in), Parameter(np.zeros(c_out)), kind="pointwise")


def init_block(cfg: EncoderConfig, rng: np.random.Generator) -> BlockParams:
    c, k, pad = cfg.channels, cfg.kernel, cfg.padding
    bp = BlockParams(cfg.variant, c, k, cfg.dropout, "glu" if cfg.variant == "conv_glu" else cfg.activation)
    if cfg.variant == "conv_glu":
        bp.conv = _standard(rng, c, 2 * c, k, pad)
    elif cfg.variant == "conv_gelu":
        bp.conv = _standard(rng, c, c, k, pad)
    elif cfg.variant == "separable_gelu":
        bp.depthwise = _depthwise(rng, c, k, pad)
        bp.pointwise = _pointwise(rng, c, c)
    else:
        bp.depthwise = _depthwise(rng, c, k, pad)
        bp.pair = BottleneckParams(_pointwise(rng, c, cfg.bottleneck), _pointwise(rng, cfg.bottleneck, c))
    return bp


def init_params(cfg: EncoderConfig, rng: np.random.Generator) -> list[BlockParams]:
    """Fan-in scaled uniform filters (bound ``sqrt(6 / fan_in)``), zero biases."""
    return [init_block(cfg, rng) for _ in range(cfg.n_blocks)]


def block_branch(h: Tensor, params: BlockParams) -> Tensor:
    v = params.variant
    if v in ("conv_glu", "conv_gelu"):
        h = conv1d(h, params.conv)
    elif v == "separable_gelu":
        h = depthwise_conv1d(h, params.depthwise.filters, params.depthwise.spec.padding)
        h = pointwise_conv1d(h, params.pointwise.filters, params.pointwise.bias)
    elif v == "separable_bottleneck_gelu":
        h = depthwise_conv1d(h, params.depthwise.filters, params.depthwise.spec.padding)
        h = bottleneck_pointwise(h, params.pair)
    else:
        raise ConfigError(f"unknown block variant {v!r}")
    return activate(h, params.activation)


def block_forward(x: Tensor, params: BlockParams, rng: np.random.Generator | None = None,
                  training: bool = False) -> Tensor:
    if x.shape[-2] != params.channels:
        raise DimensionError(f"block expects {params.channels} channels, got input {x.shape}")
    h, _ = dropout(x, params.dropout, rng, training)
    h = block_branch(h, params)
    if h.shape != x.shape:
        raise DimensionError(f"residual branch shape {h.shape} != input shape {x.shape}")
    return add(x, h)


def encoder_forward(x: Tensor, blocks: list[BlockParams], rng: np.random.Generator | None = None,
                    training: bool = False) -> Tensor:
    for i, bp in enumerate(blocks):
        try:
            x = block_forward(x, bp, rng, training)
        except LightConvError as exc:
            raise type(exc)(f"block {i}: {exc}") from exc
    return x


class ConvEncoder(Module):
    """Residual stack of identical-variant blocks; shape-preserving on ``(c, t)``."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.blocks = init_params(cfg, rng)

    @property
    def channels(self) -> int:
        return self.cfg.channels

    def __call__(self, x: Tensor, rng: np.random.Generator | None = None, training: bool = False) -> Tensor:
        return encoder_forward(x, self.blocks, rng, training)
