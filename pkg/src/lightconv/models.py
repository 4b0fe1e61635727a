"""Task model graphs with a pluggable representation layer.

Each model embeds its input into a ``(c, t)`` feature map, runs an encoder
(convolutional stack or LSTM baseline), and decodes with a linear head.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .blocks import ConvEncoder
from .config import Config
from .cost import CHAR_WIDTHS
from .errors import ConfigError, DataError, DimensionError
from .ops import ConvParams, ConvSpec, activate, conv1d, embedding_lookup, linear, pool_time
from .tensor import (
    Module,
    Parameter,
    Tensor,
    add_constant,
    concat,
    dropout,
    make,
    matmul,
    mul_constant,
    reshape,
    transpose,
)

PAD_CHAR = 0
UNK_CHAR = 1
NO_GAZ = 0
UNK_WORD = 0
BOS = 1
_MASKED = -1e9


# ---------------------------------------------------------------------------
# recurrent baseline

@dataclass
class LstmParams:
    """Gate rows are stacked in the order input, forget, cell candidate, output."""

    w_x: Tensor
    w_h: Tensor
    bias: Tensor

    @property
    def hidden(self) -> int:
        return self.w_h.shape[1]


def init_lstm(d: int, h: int, rng: np.random.Generator) -> LstmParams:
    bound = 1.0 / np.sqrt(h)
    return LstmParams(
        Parameter(rng.uniform(-bound, bound, (4 * h, d))),
        Parameter(rng.uniform(-bound, bound, (4 * h, h))),
        Parameter(np.zeros(4 * h)),
    )


def lstm_forward(x: Tensor, params: LstmParams, reverse: bool = False) -> Tensor:
    """Single-layer LSTM over a ``(d, t)`` sequence from a zero state; returns ``(h, t)``.

    With ``reverse`` the sequence is consumed right to left and the output is
    re-aligned to input positions.
    """
    xd = x.data[:, ::-1] if reverse else x.data
    wx, wh, b = params.w_x.data, params.w_h.data, params.bias.data
    h = wh.shape[1]
    if x.ndim != 2 or wx.shape[1] != x.shape[0]:
        raise DimensionError(f"lstm expects ({wx.shape[1]}, t) input, got {x.shape}")
    t = xd.shape[1]
    zx = wx @ xd + b[:, None]
    gates = np.empty((4 * h, t))
    cells = np.empty((h, t))
    hs = np.empty((h, t))
    h_prev = np.zeros(h)
    c_prev = np.zeros(h)
    for tau in range(t):
        z = zx[:, tau] + wh @ h_prev
        i, f, o = expit(z[:h]), expit(z[h : 2 * h]), expit(z[3 * h :])
        g = np.tanh(z[2 * h : 3 * h])
        c_prev = f * c_prev + i * g
        h_prev = o * np.tanh(c_prev)
        gates[:h, tau], gates[h : 2 * h, tau], gates[2 * h : 3 * h, tau], gates[3 * h :, tau] = i, f, g, o
        cells[:, tau] = c_prev
        hs[:, tau] = h_prev

    def backward(gy):
        gy = gy[:, ::-1] if reverse else gy
        dzs = np.empty((4 * h, t))
        dwh = np.zeros_like(wh)
        dh_next = np.zeros(h)
        dc_next = np.zeros(h)
        for tau in range(t - 1, -1, -1):
            i, f, g, o = gates[:h, tau], gates[h : 2 * h, tau], gates[2 * h : 3 * h, tau], gates[3 * h :, tau]
            tc = np.tanh(cells[:, tau])
            c_before = cells[:, tau - 1] if tau else np.zeros(h)
            h_before = hs[:, tau - 1] if tau else np.zeros(h)
            dh = gy[:, tau] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * c_before * f * (1.0 - f),
                dc * i * (1.0 - g * g),
                dh * tc * o * (1.0 - o),
            ])
            dzs[:, tau] = dz
            dwh += np.outer(dz, h_before)
            dh_next = wh.T @ dz
            dc_next = dc * f
        dx = wx.T @ dzs
        return dx[:, ::-1] if reverse else dx, dzs @ xd.T, dwh, dzs.sum(axis=1)

    out = hs[:, ::-1] if reverse else hs
    return make(np.ascontiguousarray(out), (x, params.w_x, params.w_h, params.bias), backward)


class RecurrentEncoder(Module):
    """LSTM baseline with the conv encoder's ``(d, t) -> (d, t)`` contract.

    Unidirectional with hidden size ``d`` (causal), or bidirectional with
    ``d/2`` per direction, concatenated.
    """

    def __init__(self, d: int, bidirectional: bool, rng: np.random.Generator, dropout: float = 0.0):
        if bidirectional and d % 2:
            raise ConfigError("bidirectional LSTM needs an even channel count")
        self.d = d
        self.bidirectional = bidirectional
        self.dropout = dropout
        h = d // 2 if bidirectional else d
        self.fwd = init_lstm(d, h, rng)
        self.bwd = init_lstm(d, h, rng) if bidirectional else None

    @property
    def channels(self) -> int:
        return self.d

    def __call__(self, x: Tensor, rng=None, training: bool = False) -> Tensor:
        x, _ = dropout(x, self.dropout, rng, training)
        out = lstm_forward(x, self.fwd)
        if self.bidirectional:
            out = concat([out, lstm_forward(x, self.bwd, reverse=True)], axis=0)
        return out


def build_encoder(cfg: Config, rng: np.random.Generator):
    if cfg.encoder.variant == "recurrent":
        return RecurrentEncoder(cfg.encoder.c, cfg.task != "nwp", rng, cfg.encoder.dropout)
    return ConvEncoder(cfg.encoder_config(), rng)


def _uniform(rng, shape, fan_in) -> Parameter:
    bound = np.sqrt(6.0 / fan_in)
    return Parameter(rng.uniform(-bound, bound, shape))


def _normal(rng, shape, std) -> Parameter:
    return Parameter(rng.normal(0.0, std, shape))


# ---------------------------------------------------------------------------
# next word prediction

class FactorizedEmbedding(Module):
    """``W = W_a @ W_b`` with ``W_a: (V, r)``, ``W_b: (r, d)``."""

    def __init__(self, w_a: Parameter, w_b: Parameter):
        if w_a.shape[1] != w_b.shape[0]:
            raise DimensionError(f"factor rank mismatch: {w_a.shape} x {w_b.shape}")
        self.w_a = w_a
        self.w_b = w_b

    @property
    def rank(self) -> int:
        return self.w_a.shape[1]

    def materialize(self) -> Tensor:
        return matmul(self.w_a, self.w_b)


class NwpModel(Module):
    """Language model: factorized embedding, causal encoder, tied decoder.

    The decoder reuses the embedding's factors: logits are ``h @ W.T + bias``
    with ``W`` materialized from the shared ``(W_a, W_b)`` on every forward.
    """

    task = "nwp"

    def __init__(self, cfg: Config, rng: np.random.Generator):
        if cfg.padding != "causal":
            raise ConfigError("next word prediction needs a causal encoder")
        V, r, d = cfg.model.vocab, cfg.model.rank, cfg.encoder.c
        if V < 2:
            raise ConfigError(f"model.vocab must be at least 2, got {V}")
        self.cfg = cfg
        self.embedding = FactorizedEmbedding(_normal(rng, (V, r), 1.0 / np.sqrt(r)), _normal(rng, (r, d), 1.0 / np.sqrt(r)))
        self.encoder = build_encoder(cfg, rng)
        self.out_bias = Parameter(np.zeros(V))
        self.meta: dict[str, str] = {}

    @property
    def vocab_size(self) -> int:
        return self.embedding.w_a.shape[0]

    def __call__(self, tokens, rng=None, training: bool = False) -> Tensor:
        """Logits ``(len, V)``; row ``i`` depends on ``tokens[: i + 1]`` only."""
        enc_cfg = getattr(self.encoder, "cfg", None)
        if enc_cfg is not None and enc_cfg.padding != "causal":
            raise ConfigError("next word prediction needs a causal encoder")
        w = self.embedding.materialize()
        x = transpose(embedding_lookup(w, tokens))
        h = self.encoder(x, rng, training)
        return linear(transpose(h), transpose(w), self.out_bias)


# ---------------------------------------------------------------------------
# joint intent / slot

def _char_conv(rng, e: int, f: int, k: int) -> ConvParams:
    spec = ConvSpec(e, f, k, padding="none")
    return ConvParams(spec, _uniform(rng, (f, e, k), e * k), Parameter(np.zeros(f)))


def char_layout(words) -> tuple[np.ndarray, np.ndarray]:
    """Pad each word as ``[PAD] + chars + [PAD]`` and right-fill to a common width.

    Empty words become a single PAD char. Returns ``(ids (T, L), true_lengths (T,))``.
    """
    seqs = [[PAD_CHAR] + (list(w) or [PAD_CHAR]) + [PAD_CHAR] for w in words]
    lengths = np.array([len(s) for s in seqs])
    width = max(int(lengths.max()), max(CHAR_WIDTHS))
    ids = np.full((len(seqs), width), PAD_CHAR, dtype=np.int64)
    for j, s in enumerate(seqs):
        ids[j, : len(s)] = s
    return ids, lengths


def encode_words(words, table: Tensor, convs: list[ConvParams]) -> Tensor:
    """Char-CNN word vectors ``(T, sum of filters)``: per-width conv, max over valid positions."""
    if not len(words):
        raise DataError("cannot encode an empty word list")
    ids, lengths = char_layout(words)
    emb = embedding_lookup(table, ids)
    emb = mul_constant(emb, (ids != PAD_CHAR)[..., None].astype(np.float64))
    x = transpose(emb, (0, 2, 1))
    outs = []
    for p in convs:
        k = p.spec.kernel
        y = conv1d(x, p)
        valid = np.maximum(lengths, k) - k + 1
        mask = np.where(np.arange(y.shape[-1])[None, :] < valid[:, None], 0.0, _MASKED)
        outs.append(pool_time(add_constant(y, mask[:, None, :]), "max"))
    return concat(outs, axis=1)


def char_word_encode(word, table: Tensor, convs: list[ConvParams]) -> Tensor:
    """Vector for a single word of char ids."""
    return reshape(encode_words([word], table, convs), (-1,))


def gazetteer_encode(tags, table: Tensor) -> Tensor:
    """Per-token max over the embeddings of its gazetteer ids (``NO_GAZ`` when none)."""
    lists = [list(t) or [NO_GAZ] for t in tags]
    m = max(len(t) for t in lists)
    ids = np.array([t + [t[0]] * (m - len(t)) for t in lists], dtype=np.int64)
    emb = embedding_lookup(table, ids)
    return pool_time(transpose(emb, (0, 2, 1)), "max")


class IntentSlotModel(Module):
    """Char-CNN + gazetteer word vectors feeding separate intent and slot towers."""

    task = "intent_slot"

    def __init__(self, cfg: Config, rng: np.random.Generator):
        m = cfg.model
        f = m.char_filters // len(CHAR_WIDTHS)
        if m.char_vocab < 2 or m.gaz_vocab < 1:
            raise ConfigError("intent_slot needs model.char_vocab >= 2 and model.gaz_vocab >= 1")
        self.cfg = cfg
        self.char_table = _normal(rng, (m.char_vocab, m.char_dim), 1.0)
        self.char_convs = [_char_conv(rng, m.char_dim, f, k) for k in CHAR_WIDTHS]
        self.gaz_table = _normal(rng, (m.gaz_vocab, m.gaz_dim), 1.0)
        self.intent_encoder = build_encoder(cfg, rng)
        self.slot_encoder = build_encoder(cfg, rng)
        c = cfg.encoder.c
        self.intent_w = _uniform(rng, (c, m.intents), c)
        self.intent_b = Parameter(np.zeros(m.intents))
        self.slot_w = _uniform(rng, (c, m.slots), c)
        self.slot_b = Parameter(np.zeros(m.slots))
        self.meta: dict[str, str] = {}

    def word_representations(self, chars, gaz) -> Tensor:
        """``(c, T)`` map of concatenated char-CNN and gazetteer vectors."""
        if len(chars) != len(gaz):
            raise DataError(f"gazetteer tags ({len(gaz)}) not aligned with tokens ({len(chars)})")
        words = encode_words(chars, self.char_table, self.char_convs)
        g = gazetteer_encode(gaz, self.gaz_table)
        return transpose(concat([words, g], axis=1))

    def __call__(self, chars, gaz, rng=None, training: bool = False) -> tuple[Tensor, Tensor]:
        x = self.word_representations(chars, gaz)
        hi = self.intent_encoder(x, rng, training)
        intent = linear(pool_time(hi, "max"), self.intent_w, self.intent_b)
        hs = self.slot_encoder(x, rng, training)
        slots = linear(transpose(hs), self.slot_w, self.slot_b)
        return intent, slots


# ---------------------------------------------------------------------------
# document classification

class DocClassModel(Module):
    """Byte embeddings, encoder, time pooling, binary head."""

    task = "doc_class"
    VOCAB = 256

    def __init__(self, cfg: Config, rng: np.random.Generator):
        if cfg.model.vocab not in (0, self.VOCAB):
            raise ConfigError(f"doc_class vocabulary is fixed at 256 bytes, got model.vocab={cfg.model.vocab}")
        c = cfg.encoder.c
        self.cfg = cfg
        self.pool = cfg.model.pool
        self.table = _normal(rng, (self.VOCAB, c), 1.0)
        self.encoder = build_encoder(cfg, rng)
        self.head_w = _uniform(rng, (c, 2), c)
        self.head_b = Parameter(np.zeros(2))
        self.meta: dict[str, str] = {}

    def __call__(self, data, rng=None, training: bool = False) -> Tensor:
        ids = np.frombuffer(data, dtype=np.uint8) if isinstance(data, (bytes, bytearray)) else np.asarray(data)
        if ids.size == 0:
            raise DataError("empty document")
        x = transpose(embedding_lookup(self.table, ids))
        h = self.encoder(x, rng, training)
        return linear(pool_time(h, self.pool), self.head_w, self.head_b)


MODELS = {"nwp": NwpModel, "intent_slot": IntentSlotModel, "doc_class": DocClassModel}


def build_model(cfg: Config, rng: np.random.Generator):
    cfg.validate()
    return MODELS[cfg.task](cfg, rng)
