"""Finite-difference cases for every differentiable op.

Each case builds ``(fn, inputs)``: ``fn`` recomputes a scalar from the
parameters in ``inputs`` deterministically, ready for ``grad_check``.
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np

from lightconv import ops, tensor as T
from lightconv.models import encode_words, gazetteer_encode, init_lstm, lstm_forward
from lightconv.tensor import Parameter, make_rng
from lightconv.train import cross_entropy, projected


@dataclass
class GradCase:
    name: str
    build: Callable
    seed: int = 0


def P(rng, *shape, scale=1.0):
    return Parameter(rng.normal(scale=scale, size=shape))


def away_from_zero(rng, *shape, margin=0.05):
    x = rng.normal(size=shape)
    return Parameter(np.sign(x) * (np.abs(x) + margin))


def proj(out, seed=99):
    return projected(out, make_rng(seed))


def separated_max(rng, *shape, gap=1e-3):
    """Resample until every max-pool row has a clear winner (ties are non-smooth)."""
    while True:
        x = rng.normal(size=shape)
        top2 = np.sort(x, axis=-1)[..., -2:]
        if (top2[..., 1] - top2[..., 0] > gap).all():
            return Parameter(x)


def _conv(rng, c, out, k, groups=1, stride=1, padding="same", batch=None, bias=True):
    x = P(rng, *((batch,) if batch else ()), c, 7)
    w = P(rng, out, c // groups, k)
    b = P(rng, out) if bias else None
    params = ops.ConvParams(ops.ConvSpec(c, out, k, groups, stride, padding), w, b)
    return (lambda: proj(ops.conv1d(x, params))), [x, w] + ([b] if bias else [])


def _case(name, seed=0):
    def wrap(build):
        CASES.append(GradCase(name, build, seed))
        return build

    return wrap


CASES: list[GradCase] = []


@_case("matmul")
def _(rng):
    a, b = P(rng, 4, 3), P(rng, 3, 5)
    return (lambda: proj(T.matmul(a, b))), [a, b]


@_case("add")
def _(rng):
    a, b = P(rng, 3, 4), P(rng, 3, 4)
    return (lambda: proj(T.add(a, b))), [a, b]


@_case("mul")
def _(rng):
    a, b = P(rng, 3, 4), P(rng, 3, 4)
    return (lambda: proj(T.mul(a, b))), [a, b]


@_case("scale_and_constants")
def _(rng):
    a = P(rng, 3, 4)
    c1, c2 = rng.normal(size=(3, 4)), rng.normal(size=(4,))
    return (lambda: proj(T.add_constant(T.mul_constant(T.scale(a, -1.7), c1), c2))), [a]


@_case("sum_and_mean")
def _(rng):
    a, b = P(rng, 3, 4), P(rng, 5)
    return (lambda: T.add(T.sum_all(a), T.scale(T.mean_all(T.mul(b, b)), 3.0))), [a, b]


@_case("transpose_reshape")
def _(rng):
    a = P(rng, 2, 3, 4)
    return (lambda: proj(T.reshape(T.transpose(a, (2, 0, 1)), (4, 6)))), [a]


@_case("concat_slice")
def _(rng):
    a, b = P(rng, 2, 3), P(rng, 4, 3)
    return (lambda: proj(T.slice_axis(T.concat([a, b, a], axis=0), 1, 7, axis=0))), [a, b]


@_case("dropout_training")
def _(rng):
    a = P(rng, 5, 6)
    return (lambda: proj(T.dropout(a, 0.4, make_rng(5), True)[0])), [a]


@_case("conv1d_dense_same")
def _(rng):
    return _conv(rng, 3, 4, 3)


@_case("conv1d_grouped_causal_strided")
def _(rng):
    return _conv(rng, 4, 6, 3, groups=2, stride=2, padding="causal")


@_case("conv1d_depthwise_groups_valid")
def _(rng):
    return _conv(rng, 3, 6, 2, groups=3, padding="none", bias=False)


@_case("conv1d_batched")
def _(rng):
    return _conv(rng, 2, 3, 4, batch=2)


@_case("depthwise_conv1d")
def _(rng):
    x, k = P(rng, 3, 6), P(rng, 3, 3)
    return (lambda: proj(ops.depthwise_conv1d(x, k, "causal"))), [x, k]


@_case("pointwise_conv1d")
def _(rng):
    x, w, b = P(rng, 3, 5), P(rng, 4, 3), P(rng, 4)
    return (lambda: proj(ops.pointwise_conv1d(x, w, b))), [x, w, b]


@_case("pointwise_conv1d_batched")
def _(rng):
    x, w, b = P(rng, 2, 3, 5), P(rng, 4, 3), P(rng, 4)
    return (lambda: proj(ops.pointwise_conv1d(x, w, b))), [x, w, b]


@_case("bottleneck_pointwise")
def _(rng):
    x, d, db, u, ub = P(rng, 5, 4), P(rng, 2, 5), P(rng, 2), P(rng, 5, 2), P(rng, 5)
    pair = ops.BottleneckParams(
        ops.ConvParams(ops.ConvSpec(5, 2, 1), d, db, kind="pointwise"),
        ops.ConvParams(ops.ConvSpec(2, 5, 1), u, ub, kind="pointwise"),
    )
    return (lambda: proj(ops.bottleneck_pointwise(x, pair))), [x, d, db, u, ub]


def _activation_case(kind):
    @_case(f"activate_{kind}")
    def _(rng):
        x = away_from_zero(rng, 4, 5)
        return (lambda: proj(ops.activate(x, kind))), [x]


for _kind in ops.ACTIVATIONS:
    _activation_case(_kind)


@_case("pool_max")
def _(rng):
    x = separated_max(rng, 4, 6)
    return (lambda: proj(ops.pool_time(x, "max"))), [x]


@_case("pool_avg")
def _(rng):
    x = P(rng, 2, 4, 6)
    return (lambda: proj(ops.pool_time(x, "avg"))), [x]


@_case("embedding_lookup")
def _(rng):
    table = P(rng, 6, 3)
    ids = [0, 5, 2, 2, 3]
    return (lambda: proj(ops.embedding_lookup(table, ids))), [table]


@_case("linear_2d")
def _(rng):
    x, w, b = P(rng, 3, 4), P(rng, 4, 2), P(rng, 2)
    return (lambda: proj(ops.linear(x, w, b))), [x, w, b]


@_case("linear_1d")
def _(rng):
    x, w, b = P(rng, 4), P(rng, 4, 3), P(rng, 3)
    return (lambda: proj(ops.linear(x, w, b))), [x, w, b]


@_case("cross_entropy")
def _(rng):
    logits = P(rng, 5, 4, scale=2.0)
    return (lambda: cross_entropy(logits, [0, 3, 1, 1, 2])), [logits]


@_case("lstm_forward")
def _(rng):
    x = P(rng, 3, 5)
    lp = init_lstm(3, 2, rng)
    lp.bias.assign(rng.normal(scale=0.3, size=8))
    return (lambda: proj(lstm_forward(x, lp))), [x, lp.w_x, lp.w_h, lp.bias]


@_case("lstm_forward_reverse")
def _(rng):
    x = P(rng, 2, 4)
    lp = init_lstm(2, 3, rng)
    return (lambda: proj(lstm_forward(x, lp, reverse=True))), [x, lp.w_x, lp.w_h, lp.bias]


@_case("char_cnn_words", seed=3)
def _(rng):
    table = P(rng, 8, 3)
    convs = [
        ops.ConvParams(ops.ConvSpec(3, 2, k, padding="none"), P(rng, 2, 3, k), P(rng, 2)) for k in (2, 3, 4)
    ]
    words = [[3], [1, 4, 7, 2, 5], [6, 2]]
    params = [table] + [t for p in convs for t in p.tensors()]
    return (lambda: proj(encode_words(words, table, convs))), params


@_case("gazetteer_max")
def _(rng):
    table = separated_max(rng, 4, 3)
    return (lambda: proj(gazetteer_encode([[1, 2], [], [3]], table))), [table]


OP_CASES = CASES
