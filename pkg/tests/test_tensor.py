import gc

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

import oracles
from lightconv import tensor as T
from lightconv.errors import ConfigError, DimensionError, GradientError, NonFiniteError
from lightconv.tensor import Parameter, Tensor, make_rng

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_matmul_identity():
    out = T.matmul(Tensor([[1, 0], [0, 1]]), Tensor([[5, 6], [7, 8]]))
    assert out.tolist() == [[5, 6], [7, 8]]


def test_matmul_outer_product():
    assert T.matmul(Tensor([[1], [2]]), Tensor([[3, 4]])).tolist() == [[3, 4], [6, 8]]


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(5, 4)), rng.normal(size=(4, 3))
    np.testing.assert_allclose(T.matmul(Tensor(a), Tensor(b)).data, oracles.matmul(a, b), rtol=1e-12, atol=1e-12)


def test_matmul_mismatch_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_elementwise_identities_and_arithmetic():
    x = Tensor([1.5, -2.0, 3.25])
    assert T.add(x, Tensor(np.zeros(3))).tolist() == x.tolist()
    assert T.mul(x, Tensor(np.ones(3))).tolist() == x.tolist()
    assert T.add(Tensor([1, 2]), Tensor([3, 4])).tolist() == [4, 6]
    with pytest.raises(DimensionError):
        T.add(Tensor([1, 2]), Tensor([1, 2, 3]))
    with pytest.raises(ConfigError):
        T.elementwise(x, x, "sub")


@given(hnp.arrays(np.float64, hnp.array_shapes(max_dims=3, max_side=5), elements=finite))
def test_add_commutes(a):
    b = a[::-1].copy() if a.ndim else a
    assert T.add(Tensor(a), Tensor(b)).tolist() == T.add(Tensor(b), Tensor(a)).tolist()


def test_dropout_zero_probability_is_identity():
    x = Tensor(np.arange(6.0))
    out, mask = T.dropout(x, 0.0, make_rng(0), training=True)
    assert out.tolist() == x.tolist()
    assert (mask.data == 1).all()


@pytest.mark.parametrize("p", [0.0, 0.3, 0.9])
def test_dropout_inference_is_identity(p):
    x = Tensor(np.arange(6.0))
    out, _ = T.dropout(x, p, None, training=False)
    assert out is x


def test_dropout_survivor_fraction():
    x = Tensor(np.ones(10_000))
    out, mask = T.dropout(x, 0.5, make_rng(3), training=True)
    assert 0.47 <= mask.data.mean() <= 0.53
    assert set(np.unique(out.data)) <= {0.0, 2.0}


def test_dropout_rejects_bad_probability():
    for p in (-0.1, 1.0):
        with pytest.raises(ConfigError):
            T.dropout(Tensor([1.0]), p, make_rng(0), True)


def test_tensors_are_immutable():
    t = Tensor([1.0, 2.0])
    with pytest.raises(ValueError):
        t.data[0] = 5.0


def test_non_finite_values_rejected():
    with pytest.raises(NonFiniteError):
        Tensor([1.0, np.nan])
    p = Parameter([1.0])
    with pytest.raises(NonFiniteError):
        p.assign([np.inf])


def test_parameter_assign_checks_shape():
    p = Parameter(np.zeros((2, 2)))
    with pytest.raises(DimensionError):
        p.assign(np.zeros(4))


def test_sum_gradient_is_all_ones():
    x = Parameter(np.random.default_rng(0).normal(size=(3, 4)))
    T.sum_all(x).backward()
    assert (x.grad == 1).all()


def test_gradients_accumulate_over_shared_use():
    x = Parameter([2.0, 3.0])
    T.sum_all(T.mul(x, x)).backward()
    np.testing.assert_allclose(x.grad, [4.0, 6.0])


def test_no_grad_records_nothing():
    x = Parameter([1.0])
    with T.no_grad():
        y = T.scale(x, 2.0)
    assert not y.requires_grad and y._parents == ()


def test_deep_chain_backprop_is_iterative():
    x = Parameter([1.0])
    y = x
    for _ in range(5000):
        y = T.scale(y, 1.0)
    y.backward(np.ones(1))
    assert x.grad.tolist() == [1.0]


def test_slice_concat_transpose_reshape_shapes():
    a = Tensor(np.arange(24.0).reshape(2, 3, 4))
    assert T.transpose(a, (2, 0, 1)).shape == (4, 2, 3)
    assert T.reshape(a, (6, 4)).shape == (6, 4)
    assert T.concat([a, a], axis=1).shape == (2, 6, 4)
    assert T.slice_axis(a, 1, 3, axis=2).tolist() == a.data[:, :, 1:3].tolist()
    assert Tensor(np.ones((2, 3))).T.shape == (3, 2)


def test_make_rng_determinism_and_validation():
    assert make_rng(5).random(4).tolist() == make_rng(5).random(4).tolist()
    with pytest.raises(ConfigError):
        make_rng(-1)


def test_module_dedups_tied_parameters():
    class Tied(T.Module):
        def __init__(self):
            self.w = Parameter(np.ones((2, 2)))
            self.alias = self.w
            self.parts = [Parameter(np.zeros(3))]
            self._cache = Parameter(np.zeros(5))

    m = Tied()
    assert list(m.named_parameters()) == ["w", "parts.0"]
    assert m.num_parameters() == 7


def test_memory_tracker_counts_live_buffers_once():
    with T.track_memory() as tracker:
        a = Tensor(np.zeros(100))
        view = T.make(a.data[:50])
        assert tracker.live == 800
        b = Tensor(np.zeros(10))
        assert tracker.peak == 880
        del a, view, b
        gc.collect()
        assert tracker.live == 0
    assert tracker.peak == 880
