"""Tensor engine: forward semantics, adjoints, and the gradient checker."""

import numpy as np
import pytest

from manhsi import tensor as T
from manhsi.errors import ContractError, DimensionError, GeometryError, NumericError
from manhsi.tensor import Tape, Tensor, backward, gradcheck

from oracles import conv3d_loops, normal_cdf_series, pointwise_linear_rows


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class TestConv3d:
    def test_scalar_product(self):
        x = Tensor(np.full((1, 1, 1, 1, 1), 2.0))
        k = Tensor(np.full((1, 1, 1, 1, 1), 3.0))
        assert T.conv3d(x, k).data.item() == 6.0

    def test_identity_kernel_is_exact_identity(self, rng):
        for shape in [(1, 1, 2, 3, 4), (2, 3, 1, 5, 5), (1, 2, 4, 8, 6)]:
            x = Tensor(rng.standard_normal(shape))
            k = np.zeros((shape[1], shape[1], 3, 3, 3))
            for c in range(shape[1]):
                k[c, c, 1, 1, 1] = 1.0
            out = T.conv3d(x, Tensor(k), padding=(1, 1, 1))
            assert np.array_equal(out.data, x.data)

    def test_all_ones_kernel_matches_loop_oracle(self, rng):
        x = rng.standard_normal((1, 1, 2, 3, 4))
        k = np.ones((1, 1, 3, 3, 3))
        out = T.conv3d(Tensor(x), Tensor(k), padding=(1, 1, 1)).data
        ref = conv3d_loops(x, k, padding=(1, 1, 1))
        np.testing.assert_allclose(out, ref, atol=1e-12)

    @pytest.mark.parametrize("stride,padding", [((1, 1, 1), (0, 0, 0)),
                                                ((1, 2, 2), (1, 1, 1)),
                                                ((2, 1, 2), (1, 0, 1))])
    def test_random_against_loop_oracle(self, rng, stride, padding):
        x = rng.standard_normal((2, 3, 4, 5, 6))
        k = rng.standard_normal((2, 3, 3, 3, 3))
        out = T.conv3d(Tensor(x), Tensor(k), stride=stride, padding=padding).data
        ref = conv3d_loops(x, k, stride=stride, padding=padding)
        np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)

    def test_bias_adds_per_output_channel(self, rng):
        x = rng.standard_normal((1, 2, 2, 3, 3))
        k = rng.standard_normal((4, 2, 1, 1, 1))
        b = rng.standard_normal(4)
        with_b = T.conv3d(Tensor(x), Tensor(k), Tensor(b)).data
        without = T.conv3d(Tensor(x), Tensor(k)).data
        np.testing.assert_allclose(with_b - without, b.reshape(1, 4, 1, 1, 1) *
                                   np.ones_like(without), atol=1e-12)

    def test_linearity(self, rng):
        x = rng.standard_normal((1, 2, 3, 4, 4))
        y = rng.standard_normal((1, 2, 3, 4, 4))
        k = Tensor(rng.standard_normal((3, 2, 3, 3, 3)))
        a, b = 1.7, -0.4
        lhs = T.conv3d(Tensor(a * x + b * y), k, padding=(1, 1, 1)).data
        rhs = a * T.conv3d(Tensor(x), k, padding=(1, 1, 1)).data \
            + b * T.conv3d(Tensor(y), k, padding=(1, 1, 1)).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_channel_mismatch_raises(self, rng):
        x = Tensor(rng.standard_normal((1, 2, 3, 3, 3)))
        k = Tensor(rng.standard_normal((1, 3, 1, 1, 1)))
        with pytest.raises(DimensionError):
            T.conv3d(x, k)

    def test_too_small_input_raises_geometry(self, rng):
        x = Tensor(rng.standard_normal((1, 1, 1, 2, 2)))
        k = Tensor(rng.standard_normal((1, 1, 3, 3, 3)))
        with pytest.raises(GeometryError):
            T.conv3d(x, k)

    def test_even_kernel_rejected(self, rng):
        x = Tensor(rng.standard_normal((1, 1, 4, 4, 4)))
        k = Tensor(rng.standard_normal((1, 1, 2, 2, 2)))
        with pytest.raises(ContractError):
            T.conv3d(x, k)

    def test_strided_output_geometry(self, rng):
        x = Tensor(rng.standard_normal((1, 1, 4, 16, 16)))
        k = Tensor(rng.standard_normal((8, 1, 3, 3, 3)))
        out = T.conv3d(x, k, stride=(1, 2, 2), padding=(1, 1, 1))
        assert out.shape == (1, 8, 4, 8, 8)


class TestConvTranspose3d:
    def test_doubles_spatial_extents(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 4, 5, 6)))
        k = Tensor(rng.standard_normal((3, 2, 1, 2, 2)))
        out = T.conv_transpose3d(x, k, stride=(1, 2, 2))
        assert out.shape == (2, 2, 4, 10, 12)

    def test_is_adjoint_of_conv3d(self, rng):
        # <conv(x), y> == <x, conv_T(y)>: the same (Co, Ci, ...) kernel
        # array drives both, read as (Cin, Cout, ...) by the transpose
        x = rng.standard_normal((1, 2, 3, 5, 5))
        k = rng.standard_normal((3, 2, 3, 3, 3))
        y = rng.standard_normal((1, 3, 3, 3, 3))
        cx = T.conv3d(Tensor(x), Tensor(k), stride=(1, 2, 2), padding=(1, 1, 1)).data
        ty = T.conv_transpose3d(Tensor(y), Tensor(k),
                                stride=(1, 2, 2), padding=(1, 1, 1)).data
        assert ty.shape == x.shape
        np.testing.assert_allclose(np.sum(cx * y), np.sum(x * ty), rtol=1e-10)


class TestPointwiseLinear:
    def test_identity_weight(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 4)))
        out = T.pointwise_linear(x, Tensor(np.eye(4)))
        np.testing.assert_allclose(out.data, x.data, atol=1e-14)

    def test_zero_weight(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 4)))
        out = T.pointwise_linear(x, Tensor(np.zeros((4, 2))))
        assert not out.data.any()

    def test_matches_row_oracle(self, rng):
        x = rng.standard_normal((2, 5, 3))
        w = rng.standard_normal((3, 4))
        b = rng.standard_normal(4)
        out = T.pointwise_linear(Tensor(x), Tensor(w), Tensor(b)).data
        np.testing.assert_allclose(out, pointwise_linear_rows(x, w, b), atol=1e-12)

    def test_axis_mismatch(self, rng):
        with pytest.raises(DimensionError):
            T.pointwise_linear(Tensor(rng.standard_normal((2, 3))),
                               Tensor(rng.standard_normal((4, 4))))


class TestActivations:
    def test_zero_fixed_points(self):
        z = Tensor(np.zeros(3))
        assert not T.tanh(z).data.any()
        np.testing.assert_array_equal(T.sigmoid(z).data, np.full(3, 0.5))
        assert not T.gelu(z).data.any()
        assert not T.leaky_relu(z).data.any()

    def test_gelu_matches_independent_erf_series(self):
        for x in (-2.0, -0.5, 0.3, 1.0, 2.5):
            got = T.gelu(Tensor(np.array(x))).data.item()
            assert got == pytest.approx(x * normal_cdf_series(x), abs=1e-12)

    def test_gelu_at_one_is_normal_cdf_at_one(self):
        assert T.gelu(Tensor(np.array(1.0))).data.item() == pytest.approx(0.841344746, abs=1e-9)

    def test_sigmoid_strictly_inside_unit_interval(self, rng):
        # strict in exact arithmetic; in float64 the range holds up to the
        # saturation threshold near |x| ~ 36.7
        x = np.clip(rng.standard_normal(1000) * 12, -30, 30)
        out = T.sigmoid(Tensor(x)).data
        assert np.all(out > 0.0) and np.all(out < 1.0)

    def test_leaky_relu_slope(self):
        out = T.leaky_relu(Tensor(np.array([-1.0, 2.0])), slope=0.2)
        np.testing.assert_allclose(out.data, [-0.2, 2.0])

    def test_dispatcher(self, rng):
        x = Tensor(rng.standard_normal(5))
        np.testing.assert_array_equal(T.activation(x, "tanh").data, T.tanh(x).data)
        with pytest.raises(ContractError):
            T.activation(x, "relu6")


class TestBackward:
    def test_sum_gradient_is_ones(self, rng):
        x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        with Tape() as tape:
            y = T.sum_all(x)
        backward(y, tape)
        np.testing.assert_array_equal(x.grad, np.ones((3, 4)))

    def test_tanh_at_zero_gradient_is_ones(self):
        x = Tensor(np.zeros(5), requires_grad=True)
        with Tape() as tape:
            y = T.sum_all(T.tanh(x))
        backward(y, tape)
        np.testing.assert_array_equal(x.grad, np.ones(5))

    def test_fanout_accumulates(self, rng):
        x = Tensor(rng.standard_normal(4), requires_grad=True)
        with Tape() as tape:
            y = T.sum_all(T.add(T.scale(x, 2.0), T.scale(x, 3.0)))
        backward(y, tape)
        np.testing.assert_allclose(x.grad, np.full(4, 5.0))

    def test_same_leaf_twice_in_mul(self, rng):
        v = rng.standard_normal(4)
        x = Tensor(v, requires_grad=True)
        with Tape() as tape:
            y = T.sum_all(T.mul(x, x))
        backward(y, tape)
        np.testing.assert_allclose(x.grad, 2 * v, atol=1e-12)

    def test_non_scalar_output_rejected(self, rng):
        x = Tensor(rng.standard_normal(3), requires_grad=True)
        with Tape() as tape:
            y = T.tanh(x)
        with pytest.raises(ContractError):
            backward(y, tape)

    def test_composite_chain_matches_finite_differences(self, rng):
        k = Tensor(rng.standard_normal((2, 1, 3, 3, 3)) * 0.5)
        w = Tensor(rng.standard_normal((2, 2)))

        def f(t):
            h = T.conv3d(t, k, padding=(1, 1, 1))
            h = T.gelu(h)
            h = T.pointwise_linear(T.moveaxis(h, 1, -1), w)
            return T.sum_all(h)

        x = Tensor(rng.standard_normal((1, 1, 2, 4, 4)))
        assert gradcheck(f, x) < 1e-7

    def test_cyclic_tape_detected(self, rng):
        x = Tensor(rng.standard_normal(3), requires_grad=True)
        with Tape() as tape:
            y = T.sum_all(x)
        # forge a record that consumes the tensor its own op produced
        tape.records.insert(0, ("forged", (y,), (x,), lambda g: (g,)))
        with pytest.raises(ContractError):
            backward(y, tape)

    def test_ops_off_tape_record_nothing(self, rng):
        x = Tensor(rng.standard_normal(3), requires_grad=True)
        y = T.tanh(x)  # no active tape
        assert y.requires_grad
        tape = Tape()
        with tape:
            pass
        assert len(tape) == 0


class TestGradcheck:
    def test_linear_function_is_exact(self, rng):
        w = Tensor(rng.standard_normal((4, 2)))
        err = gradcheck(lambda t: T.sum_all(T.pointwise_linear(t, w)),
                        Tensor(rng.standard_normal((3, 4))))
        assert err < 1e-10

    @pytest.mark.parametrize("shape", [(1,), (2, 1, 3), (1, 1, 1), (4, 2), (2, 3, 1, 2)])
    def test_elementwise_ops_on_odd_shapes(self, rng, shape):
        x = Tensor(rng.standard_normal(shape))
        for op in (T.tanh, T.sigmoid, T.gelu, lambda t: T.leaky_relu(t, 0.2)):
            assert gradcheck(lambda t: T.sum_all(op(t)), x) < 1e-5

    @pytest.mark.parametrize("shape", [(1, 1, 1, 1, 1), (2, 2, 1, 3, 3), (1, 3, 4, 2, 2),
                                       (2, 1, 2, 5, 4), (1, 2, 3, 4, 5)])
    def test_conv3d_on_varied_shapes(self, rng, shape):
        k = Tensor(rng.standard_normal((2, shape[1], 1, 3, 3)))
        x = Tensor(rng.standard_normal(shape))
        err_x = gradcheck(lambda t: T.sum_all(T.conv3d(t, k, padding=(0, 1, 1))), x)
        err_k = gradcheck(lambda t: T.sum_all(T.conv3d(x, t, padding=(0, 1, 1))), k)
        assert err_x < 1e-5 and err_k < 1e-5

    def test_reductions_shapes_and_slices(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 4)))
        assert gradcheck(lambda t: T.mean_all(T.mul(t, t)), x) < 1e-7
        assert gradcheck(lambda t: T.sum_all(t[:, 1:3]), x) < 1e-10
        assert gradcheck(lambda t: T.sum_all(T.concat(T.split_axis(t, 1), 1)), x) < 1e-10
        assert gradcheck(lambda t: T.sum_all(T.reshape(T.moveaxis(t, 0, 2), (24,))), x) < 1e-10

    def test_broken_adjoint_is_detected(self, rng):
        # negative control: a forged rule far from the true derivative
        def broken_tanh(a):
            out = np.tanh(a.data)
            return T._record("broken_tanh", (a,), out, lambda g: (g * 42.0,))

        err = gradcheck(lambda t: T.sum_all(broken_tanh(t)), Tensor(rng.standard_normal(6)))
        assert err > 1e-2

    def test_non_scalar_function_rejected(self, rng):
        with pytest.raises(ContractError):
            gradcheck(lambda t: T.tanh(t), Tensor(rng.standard_normal(3)))


class TestPrecisionAndSafety:
    def test_single_and_double_forward_agree(self, rng):
        x64 = rng.uniform(-1, 1, (1, 2, 3, 4, 4))
        k64 = rng.uniform(-1, 1, (2, 2, 3, 3, 3))
        w64 = rng.uniform(-1, 1, (2, 2))

        def chain(x, k, w):
            h = T.conv3d(x, k, padding=(1, 1, 1))
            h = T.tanh(h)
            return T.pointwise_linear(T.moveaxis(h, 1, -1), w).data

        r64 = chain(Tensor(x64), Tensor(k64), Tensor(w64))
        r32 = chain(Tensor(x64.astype(np.float32)), Tensor(k64.astype(np.float32)),
                    Tensor(w64.astype(np.float32)))
        rel = np.abs(r64 - r32) / np.maximum(np.abs(r64), 1e-3)
        assert rel.max() < 1e-3

    def test_nonfinite_output_raises(self):
        big = Tensor(np.array([1e308]))
        with pytest.raises(NumericError):
            T.scale(big, 10.0)

    def test_strict_finite_toggle(self):
        old = T.set_strict_finite(False)
        try:
            out = T.scale(Tensor(np.array([1e308])), 10.0)
            assert np.isinf(out.data).any()
        finally:
            T.set_strict_finite(old)

    def test_dtype_mismatch_rejected(self, rng):
        a = Tensor(rng.standard_normal(3))
        b = Tensor(rng.standard_normal(3).astype(np.float32))
        with pytest.raises(DimensionError):
            T.add(a, b)

    def test_tape_retained_bytes_positive(self, rng):
        x = Tensor(rng.standard_normal((4, 4)), requires_grad=True)
        with Tape() as tape:
            T.sum_all(T.tanh(x))
        assert tape.retained_bytes() > 0
