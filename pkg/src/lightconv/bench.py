"""Single-threaded latency and tensor-memory measurement.

Latency is wall-clock time of one inference at a fixed input length, taken
as median and p95 over ``runs`` samples after discarding ``warmup`` calls.
Calls faster than ``min_sample_s`` are repeated inside each sample and the
time divided (reported as ``batched``).

Memory is weights at deployment precision (4 bytes per parameter) plus the
high-water mark of live float64 tensor buffers during one forward pass.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from threadpoolctl import threadpool_limits

from .cost import REFERENCE_WORD_CHARS
from .data import ALPHABET, encode_chars
from .errors import ConfigError
from .models import DocClassModel, IntentSlotModel, NwpModel
from .tensor import no_grad, track_memory

MIN_RUNS = 50
MIN_WARMUP = 5
WEIGHT_BYTES = 4
MEMORY_OVERHEAD_BYTES = 0


@dataclass(frozen=True)
class LatencyResult:
    median_ms: float
    p95_ms: float
    runs: int
    warmup: int
    inner_loops: int

    @property
    def batched(self) -> bool:
        return self.inner_loops > 1


@dataclass(frozen=True)
class MemoryResult:
    weight_bytes: int
    activation_bytes: int

    @property
    def peak_tensor_bytes(self) -> int:
        return self.weight_bytes + self.activation_bytes + MEMORY_OVERHEAD_BYTES


@dataclass(frozen=True)
class BenchResult:
    file_size_bytes: int
    latency: LatencyResult
    memory: MemoryResult

    def to_kv(self, prefix: str = "bench") -> list[tuple[str, str]]:
        return [
            (f"{prefix}.file_size_bytes", str(self.file_size_bytes)),
            (f"{prefix}.latency_median_ms", f"{self.latency.median_ms:.4f}"),
            (f"{prefix}.latency_p95_ms", f"{self.latency.p95_ms:.4f}"),
            (f"{prefix}.latency_runs", str(self.latency.runs)),
            (f"{prefix}.latency_batched", str(int(self.latency.batched))),
            (f"{prefix}.peak_tensor_bytes", str(self.memory.peak_tensor_bytes)),
        ]


def measure_latency(fn: Callable[[], object], runs: int = MIN_RUNS, warmup: int = MIN_WARMUP,
                    min_sample_s: float = 1e-3) -> LatencyResult:
    if runs < MIN_RUNS or warmup < MIN_WARMUP:
        raise ConfigError(f"latency needs at least {MIN_RUNS} runs and {MIN_WARMUP} warmups")
    with threadpool_limits(limits=1):
        for _ in range(warmup):
            fn()
        t0 = time.perf_counter()
        fn()
        single = time.perf_counter() - t0
        inner = 1 if single >= min_sample_s else math.ceil(min_sample_s / max(single, 1e-9))
        samples = np.empty(runs)
        for i in range(runs):
            t0 = time.perf_counter()
            for _ in range(inner):
                fn()
            samples[i] = (time.perf_counter() - t0) / inner
    ms = samples * 1e3
    return LatencyResult(float(np.median(ms)), float(np.percentile(ms, 95)), runs, warmup, inner)


def reference_input(model, length: int, seed: int = 0):
    """Fixed synthetic input of ``length`` tokens (words for intent_slot, bytes for doc_class)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    if isinstance(model, NwpModel):
        return (rng.integers(2, model.vocab_size, size=length).tolist(),)
    if isinstance(model, IntentSlotModel):
        words = ["".join(ALPHABET[i] for i in rng.integers(26, size=REFERENCE_WORD_CHARS)) for _ in range(length)]
        gaz_vocab = model.gaz_table.shape[0]
        gaz = [[int(rng.integers(gaz_vocab))] for _ in range(length)]
        return ([encode_chars(w) for w in words], gaz)
    if isinstance(model, DocClassModel):
        return (bytes(rng.integers(32, 127, size=length).astype(np.uint8)),)
    raise ConfigError(f"unsupported model type {type(model).__name__}")


def inference(model, inputs) -> Callable[[], object]:
    def run():
        with no_grad():
            return model(*inputs)

    return run


def measure_memory(model, inputs=None) -> MemoryResult:
    """Weights-only when ``inputs`` is None; otherwise adds one forward pass's peak."""
    weights = WEIGHT_BYTES * model.num_parameters()
    if inputs is None:
        return MemoryResult(weights, 0)
    with track_memory() as tracker:
        out = inference(model, inputs)()
        del out
    return MemoryResult(weights, tracker.peak)


def bench_model(model, file_size_bytes: int, input_len: int, runs: int = MIN_RUNS,
                warmup: int = MIN_WARMUP) -> BenchResult:
    inputs = reference_input(model, input_len)
    latency = measure_latency(inference(model, inputs), runs, warmup)
    return BenchResult(file_size_bytes, latency, measure_memory(model, inputs))
