"""Losses, gradients, finite-difference checking, optimizers and training loops."""
from __future__ import annotations

import logging
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .config import Config, TrainSection
from .data import DocDataset, IntentSlotDataset, NwpDataset
from .errors import ConfigError, DataError, GradientError, IdRangeError
from .metrics import (
    MetricResult,
    accuracy,
    keystroke_savings,
    micro_f1,
    perplexity,
    word_prediction_rate,
)
from .models import BOS, DocClassModel, IntentSlotModel, NwpModel
from .tensor import Parameter, Tensor, add, backprop, make, mul_constant, no_grad, scale, sum_all

log = logging.getLogger(__name__)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    return logits - logsumexp(logits, axis=-1, keepdims=True)


def cross_entropy(logits: Tensor, targets: Sequence[int] | int) -> Tensor:
    """Mean negative log-likelihood of ``targets`` under ``softmax(logits)``.

    Accepts ``(n, C)`` logits with ``n`` targets, or ``(C,)`` with one target.
    """
    single = logits.ndim == 1
    z = logits.data[None] if single else logits.data
    tgt = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    n, classes = z.shape
    if len(tgt) != n:
        raise DataError(f"{len(tgt)} targets for {n} rows of logits")
    if ((tgt < 0) | (tgt >= classes)).any():
        bad = int(tgt[(tgt < 0) | (tgt >= classes)][0])
        raise IdRangeError(f"target {bad} out of range for {classes} classes")
    lp = log_softmax(z)
    loss = -lp[np.arange(n), tgt].mean()

    def backward(g):
        d = np.exp(lp)
        d[np.arange(n), tgt] -= 1.0
        d *= g / n
        return (d[0] if single else d,)

    return make(np.asarray(loss), (logits,), backward)


def backward(loss: Tensor, params: Sequence[Parameter]) -> list[np.ndarray]:
    """Gradients of a scalar ``loss`` for each parameter, in order."""
    if loss.size != 1:
        raise GradientError(f"loss must be a scalar, got shape {loss.shape}")
    grads = backprop(loss)
    out = []
    for p in params:
        entry = grads.get(id(p))
        if entry is None:
            raise GradientError(f"parameter of shape {p.shape} was not recorded in the forward pass")
        out.append(entry[1])
    return out


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a), np.asarray(b)
    if a.size == 0:
        return 0.0
    return float((np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))).max())


def numerical_gradient(fn: Callable[[], Tensor], p: Parameter, eps: float = 1e-5) -> np.ndarray:
    base = p.data.copy()
    grad = np.zeros_like(base)
    it = np.nditer(base, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        bumped = base.copy()
        bumped[idx] = base[idx] + eps
        p.assign(bumped)
        hi = float(fn().data)
        bumped[idx] = base[idx] - eps
        p.assign(bumped)
        lo = float(fn().data)
        grad[idx] = (hi - lo) / (2 * eps)
    p.assign(base)
    return grad


def grad_check(fn: Callable[[], Tensor], inputs: Sequence[Parameter], eps: float = 1e-5) -> float:
    """Max elementwise relative error between tape gradients and central differences.

    ``fn`` must be deterministic and close over ``inputs``; it returns a scalar.
    """
    analytic = backward(fn(), inputs)
    return max(relative_error(a, numerical_gradient(fn, p, eps)) for a, p in zip(analytic, inputs))


def projected(out: Tensor, rng: np.random.Generator) -> Tensor:
    """Scalarize ``out`` as ``sum(out * R)`` with fixed random ``R``."""
    return sum_all(mul_constant(out, rng.normal(size=out.shape)))


# ---------------------------------------------------------------------------
# optimizers

class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: Sequence[Parameter], grads: Sequence[np.ndarray]) -> None:
        for p, g in zip(params, grads):
            p.assign(p.data - self.lr * g)


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[int, np.ndarray] = {}
        self.v: dict[int, np.ndarray] = {}

    def step(self, params: Sequence[Parameter], grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g in zip(params, grads):
            if not g.any() and id(p) not in self.m:
                continue
            m = self.m.get(id(p), 0.0) * self.beta1 + (1.0 - self.beta1) * g
            v = self.v.get(id(p), 0.0) * self.beta2 + (1.0 - self.beta2) * g * g
            self.m[id(p)], self.v[id(p)] = m, v
            p.assign(p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps))


def make_optimizer(cfg: TrainSection):
    if cfg.optimizer == "adam":
        return Adam(cfg.lr)
    if cfg.optimizer == "sgd":
        return SGD(cfg.lr)
    raise ConfigError(f"unknown optimizer {cfg.optimizer!r}")


def clip_global_norm(grads: list[np.ndarray], max_norm: float) -> list[np.ndarray]:
    if max_norm <= 0:
        return grads
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if norm <= max_norm:
        return grads
    return [g * (max_norm / norm) for g in grads]


# ---------------------------------------------------------------------------
# task losses and predictions

def nwp_loss(model: NwpModel, sentence: Sequence[int], rng=None, training: bool = False) -> Tensor:
    """Cross-entropy summed over every position (teacher forcing, ``<s>`` prepended)."""
    if not len(sentence):
        raise DataError("empty sentence")
    inputs = [BOS] + list(sentence[:-1])
    logits = model(inputs, rng, training)
    return scale(cross_entropy(logits, sentence), float(len(sentence)))


def intent_slot_loss(model: IntentSlotModel, ex, rng=None, training: bool = False) -> Tensor:
    intent, slots = model(ex.chars, ex.gaz, rng, training)
    return add(cross_entropy(intent, ex.intent), cross_entropy(slots, ex.slots))


def doc_loss(model: DocClassModel, doc, rng=None, training: bool = False) -> Tensor:
    return cross_entropy(model(doc.data, rng, training), doc.label)


def task_examples(model, dataset) -> list:
    if isinstance(model, NwpModel):
        if isinstance(dataset, NwpDataset):
            return [s for s in dataset.ids() if s]
        return list(dataset)
    if isinstance(model, IntentSlotModel):
        return dataset.encoded() if isinstance(dataset, IntentSlotDataset) else list(dataset)
    if isinstance(model, DocClassModel):
        return dataset.documents if isinstance(dataset, DocDataset) else list(dataset)
    raise ConfigError(f"unsupported model type {type(model).__name__}")


def task_loss(model, example, rng=None, training: bool = False) -> Tensor:
    if isinstance(model, NwpModel):
        return nwp_loss(model, example, rng, training)
    if isinstance(model, IntentSlotModel):
        return intent_slot_loss(model, example, rng, training)
    return doc_loss(model, example, rng, training)


def fit(model, dataset, cfg: TrainSection, rng: np.random.Generator, max_steps: int | None = None,
        on_step: Callable[[int, float], None] | None = None) -> list[float]:
    """Minibatch training; returns the mean training loss of each optimizer step."""
    examples = task_examples(model, dataset)
    if not examples:
        raise DataError("training set is empty")
    params = model.parameters()
    opt = make_optimizer(cfg)
    history: list[float] = []
    step = 0
    for epoch in range(cfg.epochs if max_steps is None else 1 << 30):
        order = rng.permutation(len(examples))
        for start in range(0, len(order), cfg.batch):
            batch = [examples[i] for i in order[start : start + cfg.batch]]
            total = task_loss(model, batch[0], rng, True)
            for ex in batch[1:]:
                total = add(total, task_loss(model, ex, rng, True))
            loss = scale(total, 1.0 / len(batch))
            grads = clip_global_norm(backward(loss, params), cfg.clip)
            opt.step(params, grads)
            history.append(float(loss.data))
            step += 1
            if on_step is not None:
                on_step(step, history[-1])
            if max_steps is not None and step >= max_steps:
                return history
        log.info("epoch %d: mean loss %.4f", epoch, float(np.mean(history[-(len(order) // cfg.batch or 1):])))
    return history


def mean_loss(model, examples) -> float:
    with no_grad():
        return float(np.mean([float(task_loss(model, ex).data) for ex in examples]))


# ---------------------------------------------------------------------------
# evaluation

class LanguageModelAdapter:
    """``log_probs`` view of an :class:`NwpModel` for the metric functions."""

    def __init__(self, model: NwpModel):
        self.model = model

    def log_probs(self, sentence: Sequence[int]) -> np.ndarray:
        with no_grad():
            logits = self.model([BOS] + list(sentence[:-1])).data
        return log_softmax(logits)


def predict_intent_slot(model: IntentSlotModel, ex) -> tuple[int, list[int]]:
    with no_grad():
        intent, slots = model(ex.chars, ex.gaz)
    return int(np.argmax(intent.data)), [int(i) for i in np.argmax(slots.data, axis=1)]


def predict_doc(model: DocClassModel, data: bytes) -> int:
    with no_grad():
        return int(np.argmax(model(data).data))


def evaluate(model, dataset) -> list[MetricResult]:
    if isinstance(model, NwpModel):
        lm = LanguageModelAdapter(model)
        ids = [s for s in dataset.ids() if s]
        return [
            perplexity(lm, ids),
            keystroke_savings(lm, dataset.sentences, dataset.vocab.words, n_special=2),
            word_prediction_rate(lm, ids),
        ]
    if isinstance(model, IntentSlotModel):
        pi, gi, ps, gs = [], [], [], []
        for ex in dataset.encoded():
            intent, slots = predict_intent_slot(model, ex)
            pi.append(intent)
            gi.append(ex.intent)
            ps.extend(slots)
            gs.extend(ex.slots)
        return [micro_f1(pi, gi, name="intent_f1"), micro_f1(ps, gs, name="slot_f1")]
    if isinstance(model, DocClassModel):
        preds = [predict_doc(model, d.data) for d in dataset.documents]
        return [accuracy(preds, [d.label for d in dataset.documents])]
    raise ConfigError(f"unsupported model type {type(model).__name__}")
