"""Task-level glue: configs sized to data, synthetic splits, train/eval runs."""
from __future__ import annotations

import math

import numpy as np

from . import config as config_mod
from .config import Config
from .data import (
    CHAR_VOCAB,
    IntentSlotDataset,
    NwpDataset,
    Vocab,
    load_doc_class,
    load_intent_slot,
    load_nwp,
    synth_generate,
    unigram_entropy_ppl,
)
from .errors import ConfigError
from .metrics import MetricResult
from .models import build_model
from .tensor import make_rng
from .train import evaluate, fit

DESK_CONFIGS = {"nwp": "desk_nwp", "intent_slot": "desk_intentslot", "doc_class": "desk_docclass"}


def desk_config(task: str) -> Config:
    if task not in DESK_CONFIGS:
        raise ConfigError(f"unknown task {task!r}; expected one of {tuple(DESK_CONFIGS)}")
    return config_mod.load(DESK_CONFIGS[task])


def synthetic_splits(cfg: Config, seed: int, train_size: int | None = None, test_size: int | None = None):
    n_train = cfg.data.train if train_size is None else train_size
    n_test = cfg.data.test if test_size is None else test_size
    kw = {"length": cfg.data.length} if cfg.task == "nwp" else {}
    return (synth_generate(cfg.task, seed, n_train, "train", **kw),
            synth_generate(cfg.task, seed, n_test, "test", **kw))


def fit_config_to_data(cfg: Config, dataset) -> Config:
    """Copy of ``cfg`` with vocabulary and label sizes taken from ``dataset``."""
    cfg = config_mod.copy_config(cfg)
    if cfg.task == "nwp":
        cfg.model.vocab = len(dataset.vocab)
    elif cfg.task == "intent_slot":
        cfg.model.char_vocab = CHAR_VOCAB
        cfg.model.gaz_vocab = len(dataset.gaz_tags)
        cfg.model.intents = len(dataset.intents)
        cfg.model.slots = len(dataset.slot_tags)
    else:
        cfg.model.vocab = 256
    return cfg.validate()


def dataset_meta(dataset) -> dict[str, str]:
    if isinstance(dataset, NwpDataset):
        return {"tokenizer": "word", "vocab": " ".join(dataset.vocab.words)}
    if isinstance(dataset, IntentSlotDataset):
        return {"tokenizer": "char", "intents": " ".join(dataset.intents), "slots": " ".join(dataset.slot_tags),
                "gazetteer": " ".join(dataset.gaz_tags)}
    return {"tokenizer": "byte"}


def train_task(cfg: Config, dataset, seed: int, max_steps: int | None = None):
    """Build, train and label a model; returns ``(model, loss_history)``."""
    cfg = fit_config_to_data(cfg, dataset)
    rng = make_rng(seed)
    model = build_model(cfg, rng)
    model.meta = dataset_meta(dataset)
    history = fit(model, dataset, cfg.train, rng, max_steps=max_steps) if (cfg.train.epochs or max_steps) else []
    return model, history


def relabel(model, dataset):
    """Re-index a dataset with the label/vocab tables stored on ``model``."""
    meta = model.meta
    if model.task == "nwp" and "vocab" in meta:
        return NwpDataset(Vocab(meta["vocab"].split(" ")), dataset.sentences, dataset.entropy)
    if model.task == "intent_slot" and "intents" in meta:
        return IntentSlotDataset(dataset.utterances, meta["intents"].split(" "), meta["slots"].split(" "),
                                 meta["gazetteer"].split(" "))
    return dataset


def load_eval_data(model, path: str):
    if model.task == "nwp":
        if "vocab" not in model.meta:
            raise ConfigError("artifact has no vocabulary; cannot tokenize evaluation text")
        return load_nwp(path, vocab=Vocab(model.meta["vocab"].split(" ")))
    if model.task == "intent_slot":
        return relabel(model, load_intent_slot(path))
    return load_doc_class(path)


def evaluate_task(model, dataset) -> list[MetricResult]:
    return evaluate(model, relabel(model, dataset))


def nwp_reference_points(train_ds: NwpDataset, test_ds: NwpDataset) -> dict[str, float]:
    """Perplexity a perfect model attains on the synthetic chain, and a unigram baseline."""
    out = {"unigram_ppl": unigram_entropy_ppl(train_ds, test_ds)}
    if test_ds.entropy is not None:
        out["analytic_ppl"] = math.exp(test_ds.entropy)
    return out
