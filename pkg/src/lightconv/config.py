"""Flat ``key = value`` configuration files.

Keys are namespaced by section (``encoder.c``, ``train.lr``, ...). Unknown
keys, duplicate keys and unparsable values are errors. Reference configs ship
inside the package under ``lightconv/configs`` and can be named without a path.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .blocks import VARIANTS, EncoderConfig
from .errors import ConfigError

TASKS = ("nwp", "intent_slot", "doc_class")
REPRESENTATIONS = ("recurrent",) + VARIANTS


@dataclass
class EncoderSection:
    variant: str = "separable_bottleneck_gelu"
    c: int = 32
    k: int = 3
    b: int = 8
    n: int = 2
    dropout: float = 0.0
    activation: str = "gelu"


@dataclass
class ModelSection:
    vocab: int = 0
    rank: int = 16
    pool: str = "max"
    char_vocab: int = 0
    char_dim: int = 12
    char_filters: int = 24
    gaz_vocab: int = 0
    gaz_dim: int = 8
    intents: int = 8
    slots: int = 6


@dataclass
class TrainSection:
    optimizer: str = "adam"
    lr: float = 0.003
    epochs: int = 3
    batch: int = 8
    clip: float = 5.0


@dataclass
class DataSection:
    train: int = 2000
    test: int = 500
    length: int = 24


@dataclass
class BenchSection:
    input_len: int = 16
    runs: int = 50


@dataclass
class Config:
    task: str = "doc_class"
    encoder: EncoderSection = field(default_factory=EncoderSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    data: DataSection = field(default_factory=DataSection)
    bench: BenchSection = field(default_factory=BenchSection)

    def validate(self) -> "Config":
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.encoder.variant not in REPRESENTATIONS:
            raise ConfigError(f"encoder.variant must be one of {REPRESENTATIONS}, got {self.encoder.variant!r}")
        if self.model.pool not in ("max", "avg"):
            raise ConfigError(f"model.pool must be max or avg, got {self.model.pool!r}")
        if self.train.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"train.optimizer must be adam or sgd, got {self.train.optimizer!r}")
        if self.task == "intent_slot":
            if self.model.char_filters % 3:
                raise ConfigError("model.char_filters must split evenly over kernel widths 2, 3, 4")
            if self.model.char_filters + self.model.gaz_dim != self.encoder.c:
                raise ConfigError(
                    f"intent_slot word representation {self.model.char_filters}+{self.model.gaz_dim} "
                    f"must equal encoder.c={self.encoder.c}"
                )
        if self.encoder.variant == "recurrent" and self.task != "nwp" and self.encoder.c % 2:
            raise ConfigError("bidirectional recurrent baseline needs an even encoder.c")
        if self.encoder.variant != "recurrent":
            self.encoder_config()
        return self

    @property
    def padding(self) -> str:
        return "causal" if self.task == "nwp" else "same"

    def encoder_config(self, variant: str | None = None) -> EncoderConfig:
        e = self.encoder
        return EncoderConfig(
            variant=variant or e.variant,
            channels=e.c,
            kernel=e.k,
            n_blocks=e.n,
            bottleneck=e.b,
            dropout=e.dropout,
            padding=self.padding,
            activation=e.activation,
        )

    def with_variant(self, variant: str) -> "Config":
        new = copy_config(self)
        new.encoder.variant = variant
        return new.validate()

    def items(self) -> list[tuple[str, str]]:
        """Canonical ``(key, value)`` pairs in sorted key order."""
        out = [("task", self.task)]
        for section in ("encoder", "model", "train", "data", "bench"):
            obj = getattr(self, section)
            for f in dataclasses.fields(obj):
                out.append((f"{section}.{f.name}", _format(getattr(obj, f.name))))
        return sorted(out)

    def dumps(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items())


def _format(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _schema() -> dict[str, tuple[str | None, str, type]]:
    keys: dict[str, tuple[str | None, str, type]] = {"task": (None, "task", str)}
    for section, cls in (("encoder", EncoderSection), ("model", ModelSection), ("train", TrainSection),
                         ("data", DataSection), ("bench", BenchSection)):
        for f in dataclasses.fields(cls):
            keys[f"{section}.{f.name}"] = (section, f.name, type(f.default))
    return keys


SCHEMA = _schema()


def copy_config(cfg: Config) -> Config:
    return loads(cfg.dumps(), source="<copy>")


def loads(text: str, source: str = "<string>", validate: bool = True) -> Config:
    cfg = Config()
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        set_value(cfg, key, value, where=f"{source}:{lineno}")
    return cfg.validate() if validate else cfg


def set_value(cfg: Config, key: str, value: str, where: str = "") -> None:
    if key not in SCHEMA:
        raise ConfigError(f"{where}: unknown key {key!r}")
    section, name, typ = SCHEMA[key]
    try:
        parsed = typ(value)
    except ValueError:
        raise ConfigError(f"{where}: {key} expects {typ.__name__}, got {value!r}") from None
    setattr(cfg if section is None else getattr(cfg, section), name, parsed)


def reference_names() -> list[str]:
    root = resources.files("lightconv") / "configs"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".cfg"))


def load(path_or_name: str | Path) -> Config:
    """Load a config from a path, or from the bundled configs by file name."""
    path = Path(path_or_name)
    if path.is_file():
        return loads(path.read_text(), source=str(path))
    name = path.name if path.name.endswith(".cfg") else f"{path.name}.cfg"
    res = resources.files("lightconv") / "configs" / name
    if res.is_file():
        return loads(res.read_text(), source=name)
    raise ConfigError(f"config {str(path_or_name)!r} not found (bundled: {', '.join(reference_names())})")
