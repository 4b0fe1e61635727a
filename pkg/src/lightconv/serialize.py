"""Binary model artifacts.

Layout (all integers little-endian)::

    "FCNV" | version:u8 | header_len:u32 | header (UTF-8)
    repeated: name_len:u16 | name | rank:u8 | dims:u32 * rank | float32 * prod(dims)
    checksum:8 bytes

The header is canonical ``key = value`` text with sorted keys: the full model
config (``config.*``), tokenizer and label tables (``meta.*``), the tensor
count and a hex checksum of the record payload. The trailing checksum covers
header and payload. Both checksums are BLAKE2b with an 8-byte digest.

Weights are stored as float32 regardless of the float64 used in compute.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import config as config_mod
from .errors import ArtifactError, ChecksumError, ConfigError, TruncatedError, VersionError
from .models import build_model
from .tensor import make_rng

MAGIC = b"FCNV"
VERSION = 1
CHECKSUM_BYTES = 8
PREAMBLE_BYTES = len(MAGIC) + 1 + 4


def checksum(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=CHECKSUM_BYTES).digest()


@dataclass
class ArtifactInfo:
    size_bytes: int
    header_bytes: int
    n_tensors: int
    n_params: int


def record_bytes(name: str, shape: tuple[int, ...]) -> int:
    """On-disk size of one tensor record."""
    return 2 + len(name.encode("utf-8")) + 1 + 4 * len(shape) + 4 * int(np.prod(shape, dtype=np.int64))


def expected_size(header_bytes: int, named_shapes: dict[str, tuple[int, ...]]) -> int:
    return PREAMBLE_BYTES + header_bytes + sum(record_bytes(n, s) for n, s in named_shapes.items()) + CHECKSUM_BYTES


def _payload(model) -> bytes:
    parts = []
    for name, p in model.named_parameters().items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF or p.ndim > 0xFF:
            raise ArtifactError(f"tensor {name!r} cannot be encoded")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", p.ndim))
        parts.append(struct.pack(f"<{p.ndim}I", *p.shape))
        parts.append(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    return b"".join(parts)


def _header(model, payload: bytes) -> bytes:
    items = [(f"config.{k}", v) for k, v in model.cfg.items()]
    items += [(f"meta.{k}", v) for k, v in getattr(model, "meta", {}).items()]
    items += [("format", f"FCNV/{VERSION}"), ("payload.checksum", checksum(payload).hex()),
              ("payload.tensors", str(len(model.named_parameters())))]
    for k, v in items:
        if "\n" in v or "\n" in k:
            raise ArtifactError(f"header value for {k!r} contains a newline")
    return "".join(f"{k} = {v}\n" for k, v in sorted(items)).encode("utf-8")


def dumps_artifact(model) -> bytes:
    payload = _payload(model)
    header = _header(model, payload)
    body = MAGIC + struct.pack("<BI", VERSION, len(header)) + header + payload
    return body + checksum(header + payload)


def save_artifact(model, path: str | Path) -> ArtifactInfo:
    blob = dumps_artifact(model)
    Path(path).write_bytes(blob)
    header_len = struct.unpack_from("<I", blob, 5)[0]
    return ArtifactInfo(len(blob), header_len, len(model.named_parameters()), model.num_parameters())


class _Reader:
    def __init__(self, blob: bytes, source: str):
        self.blob = blob
        self.pos = 0
        self.source = source

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise TruncatedError(f"{self.source}: truncated while reading {what}")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out


def parse_header(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if not line:
            continue
        key, sep, value = line.partition(" = ")
        if not sep:
            raise ArtifactError(f"malformed header line {line!r}")
        out[key] = value
    return out


def read_artifact(blob: bytes, source: str = "<bytes>") -> tuple[dict[str, str], dict[str, np.ndarray]]:
    """Validate and split an artifact into its header map and float32 tensors."""
    r = _Reader(blob, source)
    if r.take(4, "magic") != MAGIC:
        raise ArtifactError(f"{source}: not an FCNV artifact (bad magic)")
    version = r.take(1, "version")[0]
    if version != VERSION:
        raise VersionError(f"{source}: unsupported artifact version {version} (expected {VERSION})")
    header_len = struct.unpack("<I", r.take(4, "header length"))[0]
    header_raw = r.take(header_len, "header")
    try:
        header = parse_header(header_raw.decode("utf-8"))
    except UnicodeDecodeError:
        raise ChecksumError(f"{source}: header is not valid UTF-8") from None
    try:
        n_tensors = int(header["payload.tensors"])
    except (KeyError, ValueError):
        raise ArtifactError(f"{source}: header lacks payload.tensors") from None
    start = r.pos
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        name_len = struct.unpack("<H", r.take(2, "tensor name length"))[0]
        name = r.take(name_len, "tensor name").decode("utf-8", errors="replace")
        rank = r.take(1, f"rank of {name}")[0]
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank, f"dims of {name}"))
        count = int(np.prod(dims, dtype=np.int64))
        tensors[name] = np.frombuffer(r.take(4 * count, f"values of {name}"), dtype="<f4").reshape(dims)
    payload = blob[start : r.pos]
    tail = blob[r.pos :]
    if len(tail) < CHECKSUM_BYTES:
        raise TruncatedError(f"{source}: missing or truncated checksum")
    if len(tail) > CHECKSUM_BYTES:
        raise ArtifactError(f"{source}: {len(tail) - CHECKSUM_BYTES} unexpected trailing bytes")
    if tail != checksum(header_raw + payload):
        raise ChecksumError(f"{source}: checksum mismatch")
    if header.get("payload.checksum") != checksum(payload).hex():
        raise ChecksumError(f"{source}: payload checksum mismatch")
    return header, tensors


def config_from_header(header: dict[str, str]):
    text = "".join(f"{k[len('config.'):]} = {v}\n" for k, v in header.items() if k.startswith("config."))
    try:
        return config_mod.loads(text, source="artifact header")
    except ConfigError as exc:
        raise ArtifactError(f"artifact config is invalid: {exc}") from exc


def loads_artifact(blob: bytes, source: str = "<bytes>"):
    header, tensors = read_artifact(blob, source)
    cfg = config_from_header(header)
    model = build_model(cfg, make_rng(0))
    params = model.named_parameters()
    if set(params) != set(tensors):
        missing = sorted(set(params) ^ set(tensors))
        raise ArtifactError(f"{source}: tensor set does not match the config ({', '.join(missing[:4])})")
    for name, p in params.items():
        if tuple(tensors[name].shape) != p.shape:
            raise ArtifactError(f"{source}: tensor {name} has shape {tensors[name].shape}, config expects {p.shape}")
        p.assign(tensors[name].astype(np.float64))
    model.meta = {k[len("meta."):]: v for k, v in header.items() if k.startswith("meta.")}
    return model


def load_artifact(path: str | Path):
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise ArtifactError(f"{path}: no such artifact") from None
    return loads_artifact(blob, str(path))
