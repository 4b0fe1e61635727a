"""Slow, obviously-correct reference implementations used as test oracles.

Everything here is plain Python loops over numpy scalars so it shares no code
path with the vectorised library implementation.
"""
import math

import numpy as np


def pad_lr(k, padding):
    if padding == "same":
        return (k - 1) // 2, k - 1 - (k - 1) // 2
    if padding == "causal":
        return k - 1, 0
    return 0, 0


def conv1d(x, w, bias=None, groups=1, stride=1, padding="same"):
    c, t = x.shape
    out, cpg, k = w.shape
    left, right = pad_lr(k, padding)
    xp = np.zeros((c, t + left + right))
    xp[:, left : left + t] = x
    t_out = (t + left + right - k) // stride + 1
    opg = out // groups
    y = np.zeros((out, t_out))
    for o in range(out):
        g = o // opg
        for i in range(t_out):
            acc = 0.0 if bias is None else float(bias[o])
            for ci in range(cpg):
                for j in range(k):
                    acc += w[o, ci, j] * xp[g * cpg + ci, i * stride + j]
            y[o, i] = acc
    return y


def depthwise(x, kernels, padding="same"):
    c, k = kernels.shape
    return conv1d(x, kernels.reshape(c, 1, k), groups=c, padding=padding)


def pointwise(x, w, bias=None):
    out, c = w.shape
    t = x.shape[1]
    y = np.zeros((out, t))
    for o in range(out):
        for i in range(t):
            acc = 0.0 if bias is None else float(bias[o])
            for ci in range(c):
                acc += w[o, ci] * x[ci, i]
            y[o, i] = acc
    return y


def matmul(a, b):
    m, r = a.shape
    n = b.shape[1]
    y = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            y[i, j] = sum(a[i, q] * b[q, j] for q in range(r))
    return y


def pool_scan(x, kind):
    c, t = x.shape
    out = np.zeros(c)
    for ch in range(c):
        if kind == "max":
            best = x[ch, 0]
            for i in range(1, t):
                if x[ch, i] > best:
                    best = x[ch, i]
            out[ch] = best
        else:
            total = 0.0
            for i in range(t):
                total += x[ch, i]
            out[ch] = total / t
    return out


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def gelu(z):
    return z * 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def lstm(x, w_x, w_h, bias):
    """Unrolled LSTM, gate order i, f, g, o, one scalar at a time."""
    d, t = x.shape
    h = w_h.shape[1]
    hs = np.zeros((h, t))
    hp = [0.0] * h
    cp = [0.0] * h
    for tau in range(t):
        z = []
        for r in range(4 * h):
            acc = bias[r]
            for q in range(d):
                acc += w_x[r, q] * x[q, tau]
            for q in range(h):
                acc += w_h[r, q] * hp[q]
            z.append(acc)
        new_h, new_c = [], []
        for u in range(h):
            i = sigmoid(z[u])
            f = sigmoid(z[h + u])
            g = math.tanh(z[2 * h + u])
            o = sigmoid(z[3 * h + u])
            cell = f * cp[u] + i * g
            new_c.append(cell)
            new_h.append(o * math.tanh(cell))
        hp, cp = new_h, new_c
        hs[:, tau] = hp
    return hs


def char_word(word, table, convs):
    """Char-CNN of one word: [PAD] + chars + [PAD], each width convolved, max over valid windows."""
    ids = [0] + list(word) + [0]
    emb = [np.zeros(table.shape[1]) if i == 0 else table[i] for i in ids]
    feats = []
    for w, b in convs:
        f, e, k = w.shape
        seq = emb + [np.zeros(e)] * max(0, k - len(emb))
        for o in range(f):
            best = -math.inf
            for start in range(len(seq) - k + 1):
                acc = b[o]
                for j in range(k):
                    for ch in range(e):
                        acc += w[o, ch, j] * seq[start + j][ch]
                best = max(best, acc)
            feats.append(best)
    return np.array(feats)


def log_softmax_direct(logits):
    e = np.exp(logits)
    return np.log(e / e.sum(axis=-1, keepdims=True))
