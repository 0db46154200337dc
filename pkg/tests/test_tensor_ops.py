"""Forward-path contracts of the tensor operations against naive oracles."""

import numpy as np
import pytest

from seecgnet.autodiff import Tensor, ops
from seecgnet.errors import ShapeError

from _oracles import naive_conv1d, naive_conv2d, naive_linear, naive_mean_axis


def t64(a):
    return Tensor(np.asarray(a, dtype=np.float64))


class TestConv2d:
    def test_identity_kernel(self):
        x = t64(np.ones((1, 1, 3, 3)))
        w = t64(np.ones((1, 1, 1, 1)))
        b = t64(np.zeros(1))
        out = ops.conv2d(x, w, b, stride=(1, 1), padding=(0, 0))
        assert out.shape == (1, 1, 3, 3)
        np.testing.assert_array_equal(out.data, np.ones((1, 1, 3, 3)))

    def test_two_by_two_sum(self):
        x = t64(np.ones((1, 1, 3, 3)))
        w = t64(np.ones((1, 1, 2, 2)))
        b = t64(np.zeros(1))
        out = ops.conv2d(x, w, b)
        expected = naive_conv2d(x.data, w.data, b.data, (1, 1), (0, 0))
        np.testing.assert_array_equal(expected, np.full((1, 1, 2, 2), 4.0))
        np.testing.assert_allclose(out.data, expected)

    def test_random_configs_match_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n, c_in, c_out = rng.integers(1, 4, size=3)
            t, l = rng.integers(1, 6, size=2)
            pt, pl = rng.integers(0, 3, size=2)
            kt = int(rng.integers(1, t + 2 * pt + 1))
            kl = int(rng.integers(1, l + 2 * pl + 1))
            st, sl = rng.integers(1, 4, size=2)
            x = rng.standard_normal((n, c_in, t, l))
            w = rng.standard_normal((c_out, c_in, kt, kl))
            b = rng.standard_normal(c_out)
            got = ops.conv2d(t64(x), t64(w), t64(b), (int(st), int(sl)), (int(pt), int(pl)))
            want = naive_conv2d(x, w, b, (int(st), int(sl)), (int(pt), int(pl)))
            np.testing.assert_allclose(got.data, want, rtol=1e-6, atol=1e-9)

    def test_channel_mismatch_names_axis(self):
        x = t64(np.ones((1, 3, 4, 4)))
        w = t64(np.ones((2, 2, 2, 2)))
        b = t64(np.zeros(2))
        with pytest.raises(ShapeError, match="axis 1"):
            ops.conv2d(x, w, b)

    def test_nonpositive_stride_rejected(self):
        x = t64(np.ones((1, 1, 4, 4)))
        w = t64(np.ones((1, 1, 2, 2)))
        b = t64(np.zeros(1))
        with pytest.raises(ShapeError, match="stride"):
            ops.conv2d(x, w, b, stride=(0, 1))

    def test_kernel_larger_than_padded_input(self):
        x = t64(np.ones((1, 1, 2, 2)))
        w = t64(np.ones((1, 1, 5, 1)))
        b = t64(np.zeros(1))
        with pytest.raises(ShapeError, match="axis 2"):
            ops.conv2d(x, w, b)


class TestConv1d:
    def test_identity_kernel(self):
        out = ops.conv1d(t64([[[1.0, 2.0, 3.0]]]), t64([[[1.0]]]), t64([0.0]))
        np.testing.assert_array_equal(out.data, [[[1.0, 2.0, 3.0]]])

    def test_box_kernel(self):
        out = ops.conv1d(t64([[[1.0, 2.0, 3.0, 4.0]]]), t64([[[1.0, 1.0]]]), t64([0.0]))
        np.testing.assert_array_equal(out.data, [[[3.0, 5.0, 7.0]]])

    def test_random_configs_match_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            n, c_in, c_out = rng.integers(1, 4, size=3)
            t = int(rng.integers(1, 6))
            p = int(rng.integers(0, 3))
            k = int(rng.integers(1, t + 2 * p + 1))
            s = int(rng.integers(1, 4))
            x = rng.standard_normal((n, c_in, t))
            w = rng.standard_normal((c_out, c_in, k))
            b = rng.standard_normal(c_out)
            got = ops.conv1d(t64(x), t64(w), t64(b), s, p)
            want = naive_conv1d(x, w, b, s, p)
            np.testing.assert_allclose(got.data, want, rtol=1e-6, atol=1e-9)


class TestElementwise:
    def test_relu_at_zero_and_negative(self):
        out = ops.relu(t64([-1.0, 0.0, 2.0]))
        np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])

    def test_sigmoid_symmetry_point(self):
        out = ops.sigmoid(t64([0.0]))
        np.testing.assert_allclose(out.data, [0.5])

    def test_sigmoid_extreme_inputs_stay_finite(self):
        out = ops.sigmoid(t64([-1000.0, 1000.0]))
        assert np.all(np.isfinite(out.data))
        np.testing.assert_allclose(out.data, [0.0, 1.0], atol=1e-12)

    def test_add(self):
        out = ops.add(t64([1.0, 2.0]), t64([3.0, 4.0]))
        np.testing.assert_array_equal(out.data, [4.0, 6.0])

    def test_sub(self):
        out = ops.sub(t64([1.0, 2.0]), t64([3.0, 1.0]))
        np.testing.assert_array_equal(out.data, [-2.0, 1.0])

    def test_binary_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ops.add(t64([1.0, 2.0]), t64([1.0, 2.0, 3.0]))

    def test_log_rejects_nonpositive(self):
        with pytest.raises(ValueError, match="positive"):
            ops.log(t64([1.0, 0.0]))

    def test_scale_by_constant(self):
        out = ops.scale(t64([1.0, -2.0]), 2.5)
        np.testing.assert_array_equal(out.data, [2.5, -5.0])

    def test_pow_const_cases(self):
        x = t64([0.0, 0.5, 2.0])
        np.testing.assert_allclose(ops.pow_const(x, 2.0).data, [0.0, 0.25, 4.0])
        np.testing.assert_allclose(ops.pow_const(x, 0.0).data, [1.0, 1.0, 1.0])


class TestReduce:
    def test_global_average_pool_of_constant(self):
        x = np.full((2, 3, 4, 5), 0.0)
        for c in range(3):
            x[:, c] = c + 0.5
        out = ops.global_avg_pool(t64(x))
        np.testing.assert_allclose(out.data, np.tile([0.5, 1.5, 2.5], (2, 1)))

    def test_avg_pool1d_window_two(self):
        out = ops.avg_pool1d(t64([[[1.0, 2.0, 3.0, 4.0]]]), window=2, stride=2)
        np.testing.assert_array_equal(out.data, [[[1.5, 3.5]]])

    def test_mean_axis_matches_summation_oracle(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((3, 4))
        for axis in (0, 1):
            got = ops.mean_axis(t64(x), axis)
            np.testing.assert_allclose(got.data, naive_mean_axis(x, axis), rtol=1e-7)

    def test_empty_axis_rejected(self):
        with pytest.raises(ShapeError):
            ops.mean_axis(Tensor(np.zeros((0, 2))), 0)

    def test_pool_window_exceeding_extent(self):
        with pytest.raises(ShapeError):
            ops.avg_pool1d(t64(np.ones((1, 1, 3))), window=4, stride=1)


class TestLinear:
    def test_identity_map(self):
        x = np.arange(6, dtype=np.float64).reshape(2, 3)
        out = ops.linear(t64(x), t64(np.eye(3)), t64(np.zeros(3)))
        np.testing.assert_array_equal(out.data, x)

    def test_small_case(self):
        out = ops.linear(t64([[1.0, 2.0]]), t64([[1.0, 1.0], [1.0, -1.0]]), t64([0.0, 0.0]))
        np.testing.assert_array_equal(out.data, [[3.0, -1.0]])

    def test_random_cases_match_triple_loop(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            n, f_in, f_out = rng.integers(1, 6, size=3)
            x = rng.standard_normal((n, f_in))
            w = rng.standard_normal((f_out, f_in))
            b = rng.standard_normal(f_out)
            got = ops.linear(t64(x), t64(w), t64(b))
            np.testing.assert_allclose(got.data, naive_linear(x, w, b), rtol=1e-6, atol=1e-9)

    def test_inner_extent_mismatch(self):
        with pytest.raises(ShapeError):
            ops.linear(t64(np.ones((2, 3))), t64(np.ones((2, 4))), t64(np.zeros(2)))


class TestReshapeConcat:
    def test_reshape_keeps_row_major_order(self):
        x = np.arange(6, dtype=np.float64).reshape(2, 3)
        out = ops.reshape(t64(x), (6,))
        np.testing.assert_array_equal(out.data, np.arange(6))

    def test_reshape_round_trip_bitwise(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((4, 5))
        back = ops.reshape(ops.reshape(t64(x), (20,)), (4, 5))
        assert back.data.tobytes() == x.tobytes()

    def test_reshape_count_mismatch(self):
        with pytest.raises(ShapeError):
            ops.reshape(t64(np.ones((2, 3))), (7,))

    def test_concat_axis0(self):
        out = ops.concat([t64([1.0, 2.0]), t64([3.0])], axis=0)
        np.testing.assert_array_equal(out.data, [1.0, 2.0, 3.0])

    def test_concat_mismatched_other_axis(self):
        with pytest.raises(ShapeError):
            ops.concat([t64(np.ones((2, 2))), t64(np.ones((2, 3)))], axis=0)


class TestSoftmax:
    def test_symmetry(self):
        out = ops.softmax(t64([[0.0, 0.0]]))
        np.testing.assert_allclose(out.data, [[0.5, 0.5]])

    def test_constant_rows(self):
        for x in (-3.0, 0.0, 7.5):
            out = ops.softmax(t64([[x, x, x]]))
            np.testing.assert_allclose(out.data, [[1 / 3, 1 / 3, 1 / 3]])

    def test_extreme_logits_no_overflow(self):
        out = ops.softmax(t64([[1000.0, 0.0]]))
        assert np.all(np.isfinite(out.data))
        np.testing.assert_allclose(out.data, [[1.0, 0.0]], atol=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((10, 7)) * 10
        out = ops.softmax(t64(x))
        np.testing.assert_allclose(out.data.sum(axis=1), np.ones(10), atol=1e-6)

    def test_shift_invariance(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal((4, 5))
        base = ops.softmax(t64(x)).data
        shifted = ops.softmax(t64(x + 123.456)).data
        np.testing.assert_allclose(base, shifted, atol=1e-6)

    def test_log_softmax_consistent_with_softmax(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal((3, 4))
        np.testing.assert_allclose(
            np.exp(ops.log_softmax(t64(x)).data), ops.softmax(t64(x)).data, rtol=1e-12)


class TestFiniteness:
    def test_forward_ops_stay_finite_on_finite_inputs(self):
        rng = np.random.default_rng(21)
        x = Tensor(rng.standard_normal((2, 3, 8, 4)) * 50)
        w = Tensor(rng.standard_normal((5, 3, 3, 1)))
        b = Tensor(rng.standard_normal(5))
        y = ops.conv2d(x, w, b, (2, 1), (1, 0))
        y = ops.relu(y)
        y = ops.global_avg_pool(y)
        y = ops.sigmoid(y)
        assert np.all(np.isfinite(y.data))
