"""Evaluation metrics: perplexity, keystroke savings, word prediction rate, micro-F1, accuracy.

Language-model metrics take any object with ``log_probs(sentence) -> (L, V)``
where row ``i`` is the distribution over ``sentence[i]`` given ``sentence[:i]``.

Keystroke-savings protocol: before every keystroke of a word (including the
first) the model offers its top-1 vocabulary word consistent with the typed
prefix, given the true left context. Accepting a correct offer costs one
keystroke. One separator keystroke is counted between consecutive words and is
never saved. ``KS = 100 * saved / total``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import DataError


class LanguageModel(Protocol):
    def log_probs(self, sentence: Sequence[int]) -> np.ndarray: ...


@dataclass(frozen=True)
class MetricResult:
    name: str
    value: float
    support: int

    @property
    def is_fraction(self) -> bool:
        """F1 and accuracy live in [0, 1] and are displayed as percentages."""
        return self.name == "accuracy" or self.name.endswith("f1")

    def render(self) -> str:
        shown = 100.0 * self.value if self.is_fraction else self.value
        return f"{self.name}={shown:.2f} (n={self.support})"


def _check(corpus) -> None:
    if not corpus or not any(len(s) for s in corpus):
        raise DataError("cannot evaluate on an empty corpus")


def perplexity(model: LanguageModel, corpus: Sequence[Sequence[int]]) -> MetricResult:
    _check(corpus)
    nll = 0.0
    n = 0
    for sent in corpus:
        if not len(sent):
            continue
        lp = model.log_probs(sent)
        nll -= float(lp[np.arange(len(sent)), np.asarray(sent)].sum())
        n += len(sent)
    return MetricResult("ppl", math.exp(nll / n), n)


def word_prediction_rate(model: LanguageModel, corpus: Sequence[Sequence[int]]) -> MetricResult:
    """Percent of positions whose top-1 next word (ties -> lowest id) is the target."""
    _check(corpus)
    hits = n = 0
    for sent in corpus:
        if not len(sent):
            continue
        lp = model.log_probs(sent)
        hits += int((np.argmax(lp, axis=1) == np.asarray(sent)).sum())
        n += len(sent)
    return MetricResult("wpr", 100.0 * hits / n, n)


class _PrefixIndex:
    def __init__(self, words: Sequence[str], skip: int):
        self.words = list(words)
        self.skip = skip
        self.cache: dict[str, np.ndarray] = {}

    def candidates(self, prefix: str) -> np.ndarray:
        hit = self.cache.get(prefix)
        if hit is None:
            hit = np.array([i for i, w in enumerate(self.words) if i >= self.skip and w.startswith(prefix)],
                           dtype=np.int64)
            self.cache[prefix] = hit
        return hit


def keystroke_savings(model: LanguageModel, sentences: Sequence[Sequence[str]], vocab: Sequence[str],
                      n_special: int = 0) -> MetricResult:
    """Typeahead savings under the module-level protocol.

    ``vocab[i]`` is the string for id ``i``; the first ``n_special`` ids are
    never offered. Out-of-vocabulary words map to id 0 and can never be saved.
    """
    if not sentences or not any(len(s) for s in sentences):
        raise DataError("cannot evaluate keystroke savings on an empty corpus")
    index = {w: i for i, w in enumerate(vocab)}
    prefixes = _PrefixIndex(vocab, n_special)
    saved = total = 0
    for words in sentences:
        if not len(words):
            continue
        ids = [index.get(w, 0) for w in words]
        lp = model.log_probs(ids)
        total += sum(len(w) for w in words) + len(words) - 1
        for i, w in enumerate(words):
            for j in range(len(w)):
                cands = prefixes.candidates(w[:j])
                if not len(cands):
                    break
                best = cands[int(np.argmax(lp[i, cands]))]
                if vocab[best] == w:
                    saved += len(w) - j - 1
                    break
    return MetricResult("ks", 100.0 * saved / total, total)


def accuracy(predictions: Sequence, golds: Sequence) -> MetricResult:
    if len(predictions) != len(golds):
        raise DataError(f"{len(predictions)} predictions for {len(golds)} gold labels")
    if not len(golds):
        raise DataError("accuracy of an empty set")
    hits = sum(p == g for p, g in zip(predictions, golds))
    return MetricResult("accuracy", hits / len(golds), len(golds))


def micro_f1(predictions: Sequence, golds: Sequence, ignore: Sequence = (), name: str = "micro_f1") -> MetricResult:
    """F1 from pooled TP/FP/FN over all labels except ``ignore``."""
    if len(predictions) != len(golds):
        raise DataError(f"{len(predictions)} predictions for {len(golds)} gold labels")
    if not len(golds):
        raise DataError("micro-F1 of an empty set")
    skip = set(ignore)
    tp = fp = fn = 0
    for p, g in zip(predictions, golds):
        if p == g:
            if g not in skip:
                tp += 1
            continue
        if p not in skip:
            fp += 1
        if g not in skip:
            fn += 1
    denom = 2 * tp + fp + fn
    f1 = 2 * tp / denom if denom else 1.0
    if not skip:
        # single-label multiclass: pooled F1 collapses to accuracy
        assert abs(f1 - accuracy(predictions, golds).value) < 1e-12
    return MetricResult(name, f1, len(golds))
