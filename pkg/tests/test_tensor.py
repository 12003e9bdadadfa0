import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dtmp import tensor as tn
from dtmp.gradcheck import check_gradients, numerical_gradient, relative_error
from dtmp.tensor import Tape, Tensor, backward


def leaf(a):
    return Tensor(np.array(a, dtype=float), requires_grad=True)


finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


class TestMatmul:
    def test_identity(self):
        out = tn.matmul(Tensor([[1, 0], [0, 1]]), Tensor([[3, 4], [5, 6]]))
        np.testing.assert_array_equal(out.data, [[3, 4], [5, 6]])

    def test_hand_computed(self):
        assert tn.matmul(Tensor([[1, 2]]), Tensor([[3], [4]])).data.tolist() == [[11.0]]

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        a, b = leaf(rng.normal(size=(3, 4))), leaf(rng.normal(size=(4, 2)))
        errs = check_gradients(lambda: tn.matmul(a, b).sum(), {"a": a, "b": b})
        assert max(errs.values()) < 1e-6

    def test_batched_broadcast_gradient(self):
        rng = np.random.default_rng(1)
        a, b = leaf(rng.normal(size=(2, 3, 4))), leaf(rng.normal(size=(4, 5)))
        c = leaf(rng.normal(size=(1, 5, 2)))
        errs = check_gradients(lambda: tn.tanh(tn.matmul(tn.matmul(a, b), c)).sum(), {"a": a, "b": b, "c": c})
        assert max(errs.values()) < 1e-6

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(tn.ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            tn.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


class TestElementwise:
    def test_relu(self):
        assert tn.elementwise("relu", Tensor([-1, 0, 2])).data.tolist() == [0, 0, 2]

    def test_relu_propagates_nan(self):
        assert np.isnan(tn.relu(Tensor([np.nan])).data[0])

    def test_sigmoid_symmetry_point(self):
        assert tn.elementwise("sigmoid", Tensor([0.0])).data.tolist() == [0.5]

    def test_hadamard(self):
        out = tn.elementwise("hadamard", Tensor([1, 2, 3]), Tensor([4, 5, 6]))
        assert out.data.tolist() == [4, 10, 18]

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown"):
            tn.elementwise("softplus", Tensor([1.0]))

    def test_shape_mismatch(self):
        with pytest.raises(tn.ShapeError):
            tn.elementwise("add", Tensor(np.ones(3)), Tensor(np.ones(4)))

    @pytest.mark.parametrize("kind", ["relu", "sigmoid", "tanh", "abs"])
    def test_unary_gradients(self, kind):
        rng = np.random.default_rng(2)
        # keep away from the kinks of relu/abs
        x = leaf(rng.uniform(0.1, 2.0, (3, 4)) * rng.choice([-1, 1], (3, 4)))
        w = Tensor(rng.normal(size=(3, 4)))
        errs = check_gradients(lambda: (tn.elementwise(kind, x) * w).sum(), {"x": x})
        assert errs["x"] < 1e-4

    @pytest.mark.parametrize("kind", ["add", "hadamard", "sub"])
    def test_binary_gradients_with_bias_broadcast(self, kind):
        rng = np.random.default_rng(3)
        x, b = leaf(rng.normal(size=(2, 3, 4))), leaf(rng.normal(size=(4,)))
        errs = check_gradients(lambda: tn.tanh(tn.elementwise(kind, x, b)).sum(), {"x": x, "b": b})
        assert max(errs.values()) < 1e-4


class TestSoftmax:
    @pytest.mark.parametrize("c", [-3.0, 0.0, 7.5, 1e3])
    def test_constant_row_is_uniform(self, c):
        np.testing.assert_allclose(tn.row_softmax(Tensor([[c, c, c]])).data, [[1 / 3] * 3], atol=1e-15)

    def test_closed_form(self):
        np.testing.assert_allclose(tn.row_softmax(Tensor([[0.0, np.log(3.0)]])).data, [[0.25, 0.75]], atol=1e-15)

    def test_rows_sum_to_one(self):
        m = Tensor(np.random.default_rng(4).normal(size=(8, 8)) * 5)
        np.testing.assert_allclose(tn.row_softmax(m).data.sum(axis=1), 1.0, atol=1e-12)

    @given(arrays(np.float64, (4, 5), elements=finite), st.floats(-50, 50))
    def test_invariant_to_row_constant(self, m, c):
        a = tn.row_softmax(Tensor(m)).data
        b = tn.row_softmax(Tensor(m + c)).data
        np.testing.assert_allclose(a, b, atol=1e-12)
        np.testing.assert_allclose(a.sum(axis=-1), 1.0, atol=1e-12)

    def test_gradient(self):
        m = leaf(np.random.default_rng(5).normal(size=(3, 4)))
        w = Tensor(np.random.default_rng(6).normal(size=(3, 4)))
        assert check_gradients(lambda: (tn.row_softmax(m) * w).sum(), {"m": m})["m"] < 1e-6


def shift_loop(x, d):
    """Reference: position t receives x[t - d]; earlier positions are zero."""
    out = [0.0] * len(x)
    for t in range(len(x)):
        if t - d >= 0:
            out[t] = x[t - d]
    return out


class TestTemporalShift:
    def test_zero_is_identity(self):
        assert tn.temporal_shift(Tensor([1, 2, 3, 4]), 0, axis=0).data.tolist() == [1, 2, 3, 4]

    def test_shift_one(self):
        expected = shift_loop([1, 2, 3, 4], 1)
        assert expected == [0, 1, 2, 3]
        assert tn.temporal_shift(Tensor([1, 2, 3, 4]), 1, axis=0).data.tolist() == expected

    def test_full_shift_zeroes(self):
        assert not tn.temporal_shift(Tensor(np.ones((2, 3, 2, 1))), 3).data.any()

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            tn.temporal_shift(Tensor([1.0]), -1, axis=0)

    @given(arrays(np.float64, (2, 7, 3, 2), elements=finite), st.integers(0, 8), st.integers(0, 8))
    def test_composition_and_norm(self, x, a, b):
        t = Tensor(x)
        ab = tn.temporal_shift(tn.temporal_shift(t, a), b)
        np.testing.assert_array_equal(ab.data, tn.temporal_shift(t, a + b).data)
        assert ab.shape == t.shape
        assert np.abs(ab.data).sum() <= np.abs(x).sum()

    @given(st.lists(finite, min_size=1, max_size=12), st.integers(0, 14))
    def test_matches_loop(self, xs, d):
        assert tn.temporal_shift(Tensor(xs), d, axis=0).data.tolist() == shift_loop(xs, d)

    def test_gradient_is_reverse_shift(self):
        x = leaf(np.random.default_rng(7).normal(size=(2, 6, 3, 2)))
        w = Tensor(np.random.default_rng(8).normal(size=(2, 6, 3, 2)))
        assert check_gradients(lambda: (tn.temporal_shift(x, 2) * w).sum(), {"x": x})["x"] < 1e-8


class TestDropout:
    def test_zero_rate_identity(self):
        x = Tensor(np.arange(6.0))
        assert tn.dropout(x, 0.0, True, np.random.default_rng(0)) is x

    def test_eval_identity(self):
        x = Tensor(np.arange(6.0))
        assert tn.dropout(x, 0.9, False, None) is x

    def test_rate_statistics(self):
        y = tn.dropout(Tensor(np.ones(100_000)), 0.3, True, np.random.default_rng(0)).data
        assert abs((y == 0).mean() - 0.3) < 0.01
        np.testing.assert_allclose(y[y != 0], 1 / 0.7)

    @pytest.mark.parametrize("rate", [-0.1, 1.0, 1.5])
    def test_bad_rate(self, rate):
        with pytest.raises(ValueError):
            tn.dropout(Tensor([1.0]), rate, True, np.random.default_rng(0))

    def test_seeded_masks_repeat(self):
        x = Tensor(np.ones(50))
        a = tn.dropout(x, 0.5, True, np.random.default_rng(3)).data
        b = tn.dropout(x, 0.5, True, np.random.default_rng(3)).data
        np.testing.assert_array_equal(a, b)


class TestBackward:
    def test_sum_gives_ones(self):
        x = leaf(np.arange(5.0))
        backward(x.sum())
        np.testing.assert_array_equal(x.grad, np.ones(5))

    def test_square_gives_two_x(self):
        x = leaf([1.0, -2.0, 3.5])
        backward(tn.mul(x, x).sum())
        np.testing.assert_array_equal(x.grad, 2 * x.data)

    def test_fan_out_accumulates(self):
        x = leaf([2.0])
        y = x * 3.0
        backward((y + y * x).sum())  # 3x + 3x^2 -> 3 + 6x
        np.testing.assert_allclose(x.grad, [15.0])

    def test_non_scalar_rejected(self):
        with pytest.raises(tn.ShapeError):
            backward(leaf([1.0, 2.0]) * 2.0)

    def test_tape_is_topological_and_unique(self):
        x = leaf([1.0, 2.0])
        y = tn.tanh(x) * x
        z = (y + y).sum()
        tape = Tape.record(z)
        pos = {id(n): i for i, n in enumerate(tape)}
        assert len(pos) == len(tape)
        for n in tape:
            for p in n._parents:
                assert pos[id(p)] < pos[id(n)]

    def test_no_grad_records_nothing(self):
        x = leaf([1.0])
        with tn.no_grad():
            y = x * 2.0
        assert not y.requires_grad and y._parents == ()

    def test_concat_getitem_reshape_gradients(self):
        rng = np.random.default_rng(9)
        a, b = leaf(rng.normal(size=(2, 3))), leaf(rng.normal(size=(2, 2)))
        w = Tensor(rng.normal(size=(5, 2)))

        def f():
            c = tn.concat([a, b], axis=1)
            return tn.tanh(tn.matmul(tn.reshape(c, (5, 2)).T, w))[..., 1:].sum() + c[:, -1].sum()

        assert max(check_gradients(f, {"a": a, "b": b}).values()) < 1e-6

    def test_node_mix_gradient(self):
        rng = np.random.default_rng(10)
        A, h = leaf(rng.normal(size=(4, 4))), leaf(rng.normal(size=(2, 3, 4, 2)))
        w = Tensor(rng.normal(size=(2, 3, 4, 2)))
        np.testing.assert_allclose(tn.node_mix(A, h).data, np.einsum("ij,btjf->btif", A.data, h.data))
        assert max(check_gradients(lambda: (tn.node_mix(A, h) * w).sum(), {"A": A, "h": h}).values()) < 1e-6


def test_finite_difference_helper_on_quadratic():
    x = np.array([1.0, -2.0])
    g = numerical_gradient(lambda: float((x ** 2).sum()), x)
    np.testing.assert_allclose(g, 2 * x, rtol=1e-8)
    assert relative_error(g, 2 * x) < 1e-8
