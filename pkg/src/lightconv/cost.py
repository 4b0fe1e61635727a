"""Analytical operation and parameter counts.

One *operation* is one multiply-accumulate (a filter-tap product). Bias adds
and activations are excluded from operation counts but their parameters are
counted. Output lengths follow the actual padding geometry.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

from .blocks import EncoderConfig
from .config import Config
from .errors import ConfigError, ConfigWarning
from .ops import out_length

CHAR_WIDTHS = (2, 3, 4)
REFERENCE_WORD_CHARS = 6

HEADER = "ops = multiply-accumulates (bias/activation excluded); params = learnable scalars incl. biases"


def _positive(**kw) -> None:
    for name, v in kw.items():
        if not isinstance(v, int) or v < 1:
            raise ConfigError(f"{name} must be a positive integer, got {v!r}")


def ops_standard(c: int, k: int, t_next: int) -> int:
    _positive(c=c, k=k, t_next=t_next)
    return c * c * k * t_next


def ops_separable(c: int, k: int, t_next: int) -> int:
    _positive(c=c, k=k, t_next=t_next)
    return c * k * t_next + c * c * t_next


def ops_bottleneck(c: int, k: int, t_next: int, b: int) -> int:
    _positive(c=c, k=k, t_next=t_next, b=b)
    if 2 * b >= c:
        warnings.warn(f"bottleneck b={b} with c={c}: 2b >= c does not reduce operations", ConfigWarning, stacklevel=2)
    return c * k * t_next + 2 * b * c * t_next


def ops_unoptimized_separable(c: int, k: int, t_next: int) -> int:
    _positive(c=c, k=k, t_next=t_next)
    return c * c * k * t_next + c * c * t_next


@dataclass
class LayerCost:
    name: str
    ops: int
    params: int


@dataclass
class CostReport:
    label: str
    layers: list[LayerCost] = field(default_factory=list)
    baseline_label: str | None = None
    baseline_ops: int | None = None
    baseline_params: int | None = None

    @property
    def total_ops(self) -> int:
        return sum(layer.ops for layer in self.layers)

    @property
    def total_params(self) -> int:
        return sum(layer.params for layer in self.layers)

    @property
    def param_ratio(self) -> float | None:
        """Compression ratio: baseline params over these params."""
        if self.baseline_params is None:
            return None
        return self.baseline_params / self.total_params

    @property
    def op_ratio(self) -> float | None:
        if self.baseline_ops is None:
            return None
        return self.baseline_ops / self.total_ops if self.total_ops else float("inf")

    def against(self, baseline: "CostReport") -> "CostReport":
        return CostReport(self.label, list(self.layers), baseline.label, baseline.total_ops, baseline.total_params)

    def to_kv(self, prefix: str = "cost") -> list[tuple[str, str]]:
        out = [(f"{prefix}.{layer.name}.ops", str(layer.ops)) for layer in self.layers]
        out += [(f"{prefix}.{layer.name}.params", str(layer.params)) for layer in self.layers]
        out += [(f"{prefix}.total.ops", str(self.total_ops)), (f"{prefix}.total.params", str(self.total_params))]
        if self.baseline_label is not None:
            out += [(f"{prefix}.ratio.params", f"{self.param_ratio:.4f}"), (f"{prefix}.ratio.ops", f"{self.op_ratio:.4f}")]
        return out

    def render(self) -> str:
        w = max([len(layer.name) for layer in self.layers] + [5])
        lines = [f"# {self.label}", f"# {HEADER}", f"{'layer':<{w}}  {'ops':>14}  {'params':>12}"]
        for layer in self.layers:
            lines.append(f"{layer.name:<{w}}  {human(layer.ops):>14}  {human(layer.params):>12}")
        lines.append(f"{'total':<{w}}  {human(self.total_ops):>14}  {human(self.total_params):>12}")
        if self.baseline_label is not None:
            lines.append(f"vs {self.baseline_label}: params x{self.param_ratio:.2f}, ops x{self.op_ratio:.2f}")
        return "\n".join(lines)


def human(n: int) -> str:
    """Table-style count: ``92.50 K``, ``2.10 M``."""
    if n >= 1_000_000_000:
        return f"{n / 1e9:.2f} G"
    if n >= 1_000_000:
        return f"{n / 1e6:.2f} M"
    if n >= 1_000:
        return f"{n / 1e3:.2f} K"
    return str(n)


def block_layers(cfg: EncoderConfig, t: int, prefix: str = "block") -> list[LayerCost]:
    c, k = cfg.channels, cfg.kernel
    t_next = out_length(t, k, cfg.padding)
    layers = []
    for i in range(cfg.n_blocks):
        name = f"{prefix}{i}"
        if cfg.variant == "conv_glu":
            layers.append(LayerCost(f"{name}.conv", 2 * ops_standard(c, k, t_next), 2 * c * c * k + 2 * c))
        elif cfg.variant == "conv_gelu":
            layers.append(LayerCost(f"{name}.conv", ops_standard(c, k, t_next), c * c * k + c))
        elif cfg.variant == "separable_gelu":
            layers.append(LayerCost(f"{name}.depthwise", c * k * t_next, c * k))
            layers.append(LayerCost(f"{name}.pointwise", c * c * t_next, c * c + c))
        else:
            b = cfg.bottleneck
            layers.append(LayerCost(f"{name}.depthwise", c * k * t_next, c * k))
            layers.append(LayerCost(f"{name}.down", c * b * t_next, c * b + b))
            layers.append(LayerCost(f"{name}.up", b * c * t_next, b * c + c))
    return layers


def lstm_layers(d: int, h: int, t: int, bidirectional: bool, prefix: str = "lstm") -> list[LayerCost]:
    one = LayerCost(prefix, 4 * h * (d + h) * t, 4 * h * (d + h) + 4 * h)
    if not bidirectional:
        return [one]
    return [LayerCost(f"{prefix}.fwd", one.ops, one.params), LayerCost(f"{prefix}.bwd", one.ops, one.params)]


def encoder_layers(cfg: Config, t: int, prefix: str) -> list[LayerCost]:
    c = cfg.encoder.c
    if cfg.encoder.variant == "recurrent":
        bi = cfg.task != "nwp"
        return lstm_layers(c, c // 2 if bi else c, t, bi, prefix=f"{prefix}.lstm")
    return block_layers(cfg.encoder_config(), t, prefix=f"{prefix}.block")


def param_count(cfg: Config | EncoderConfig, t: int | None = None) -> CostReport:
    """Per-layer parameter (and operation) counts at input length ``t``.

    ``t`` defaults to ``bench.input_len`` for task configs.
    """
    if isinstance(cfg, EncoderConfig):
        return CostReport(f"encoder {cfg.variant}", block_layers(cfg, t or 1))
    t = t or cfg.bench.input_len
    m, c = cfg.model, cfg.encoder.c
    label = f"{cfg.task} {cfg.encoder.variant}"
    if cfg.task == "nwp":
        layers = [LayerCost("embedding.factors", m.vocab * m.rank * c, m.vocab * m.rank + m.rank * c)]
        layers += encoder_layers(cfg, t, "encoder")
        layers.append(LayerCost("decoder", t * c * m.vocab, m.vocab))
    elif cfg.task == "doc_class":
        layers = [LayerCost("embedding", 0, 256 * c)]
        layers += encoder_layers(cfg, t, "encoder")
        layers.append(LayerCost("head", 2 * c, 2 * c + 2))
    else:
        f = m.char_filters // len(CHAR_WIDTHS)
        layers = [LayerCost("char.embedding", 0, m.char_vocab * m.char_dim)]
        padded = REFERENCE_WORD_CHARS + 2
        for k in CHAR_WIDTHS:
            n_out = max(padded, k) - k + 1
            layers.append(LayerCost(f"char.conv{k}", t * n_out * m.char_dim * f * k, m.char_dim * f * k + f))
        layers.append(LayerCost("gazetteer.embedding", 0, m.gaz_vocab * m.gaz_dim))
        layers += encoder_layers(cfg, t, "intent")
        layers += encoder_layers(cfg, t, "slot")
        layers.append(LayerCost("intent.head", c * m.intents, c * m.intents + m.intents))
        layers.append(LayerCost("slot.head", t * c * m.slots, c * m.slots + m.slots))
    return CostReport(label, layers)


def cost_report(cfg, baseline_cfg, t: int | None = None) -> CostReport:
    return param_count(cfg, t).against(param_count(baseline_cfg, t))
