import numpy as np
import pytest

from irunet import rng
from irunet.layers import (ConvSpec, LayerParams, avg_pool2d, conv2d, conv_output_size,
                           glorot_bound, init_params, transposed_conv2d)
from irunet.tensor import Tensor, no_grad


def make_layer(spec, weight, bias=None, name="test"):
    w = np.asarray(weight, dtype=np.float64).reshape(spec.weight_shape)
    b = np.zeros(spec.bias_shape) if bias is None else np.asarray(bias, dtype=np.float64)
    return LayerParams(name, spec, Tensor(w, requires_grad=True), Tensor(b, requires_grad=True))


def rand64(seed, shape, requires_grad=True):
    vals = rng.uniform(seed, int(np.prod(shape))) * 2.0 - 1.0
    return Tensor(vals.reshape(shape), requires_grad=requires_grad, dtype=np.float64)


class TestConv2d:
    def test_one_by_one_scaling(self):
        spec = ConvSpec(1, 1, kernel=1)
        lp = make_layer(spec, [2.0])
        x = Tensor(np.ones((1, 1, 3, 3)), dtype=np.float64)
        with no_grad():
            out = conv2d(x, spec, lp)
        assert np.array_equal(out.data, np.full((1, 1, 3, 3), 2.0))

    def test_identity_kernel(self):
        spec = ConvSpec(1, 1, kernel=3)
        w = np.zeros((1, 1, 3, 3))
        w[0, 0, 1, 1] = 1.0
        lp = make_layer(spec, w)
        x = rand64(1, (1, 1, 5, 6), requires_grad=False)
        with no_grad():
            out = conv2d(x, spec, lp)
        assert np.array_equal(out.data, x.data)

    def test_valid_direct_summation(self):
        spec = ConvSpec(1, 1, kernel=2, padding="valid")
        lp = make_layer(spec, np.ones((1, 1, 2, 2)))
        x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]), dtype=np.float64)
        with no_grad():
            out = conv2d(x, spec, lp)
        assert out.data.shape == (1, 1, 1, 1)
        assert out.data[0, 0, 0, 0] == 10.0

    def test_bias_added_per_channel(self):
        spec = ConvSpec(1, 2, kernel=1)
        lp = make_layer(spec, [1.0, 1.0], bias=[0.5, -0.5])
        x = Tensor(np.zeros((1, 1, 2, 2)), dtype=np.float64)
        with no_grad():
            out = conv2d(x, spec, lp)
        assert np.array_equal(out.data[0, 0], np.full((2, 2), 0.5))
        assert np.array_equal(out.data[0, 1], np.full((2, 2), -0.5))

    def test_channel_mismatch_rejected(self):
        spec = ConvSpec(3, 4, kernel=3)
        lp = init_params(spec, 0, dtype=np.float64)
        with pytest.raises(ValueError, match="channel"):
            conv2d(rand64(2, (1, 2, 8, 8)), spec, lp)

    def test_valid_padding_too_small_rejected(self):
        spec = ConvSpec(1, 1, kernel=5, padding="valid")
        lp = init_params(spec, 0, dtype=np.float64)
        with pytest.raises(ValueError, match="valid"):
            conv2d(rand64(3, (1, 1, 3, 3)), spec, lp)

    def test_dilation_equals_zero_inflated_kernel(self):
        # equivalence oracle: dilated 3x3 == 5x5 kernel with zero-inflated taps
        x = rand64(4, (1, 2, 7, 7), requires_grad=False)
        spec_d = ConvSpec(2, 3, kernel=3, dilation=2)
        lp_d = init_params(spec_d, 99, dtype=np.float64)
        inflated = np.zeros((3, 2, 5, 5))
        inflated[:, :, ::2, ::2] = lp_d.weight.data
        spec_i = ConvSpec(2, 3, kernel=5)
        with no_grad():
            a = conv2d(x, spec_d, lp_d)
            b = conv2d(x, spec_i, make_layer(spec_i, inflated))
        assert np.array_equal(a.data, b.data)

    def test_same_padding_shape_law(self):
        # out == ceil(in / stride) across kernel/stride/dilation combinations
        for trial in range(60):
            u = rng.uniform(rng.hash64("shape-law", trial), 5)
            k = 1 + int(u[0] * 4)
            s = 1 + int(u[1] * 3)
            d = 1 + int(u[2] * 3)
            h = 1 + int(u[3] * 12)
            w = 1 + int(u[4] * 12)
            spec = ConvSpec(1, 1, kernel=k, stride=s, dilation=d)
            lp = init_params(spec, trial, dtype=np.float64)
            with no_grad():
                out = conv2d(rand64(trial, (1, 1, h, w), requires_grad=False), spec, lp)
            assert out.shape == (1, 1, -(-h // s), -(-w // s))

    def test_asymmetric_padding_goes_bottom_right(self):
        # 2x2 kernel, same padding on even input: one pad column/row, at bottom/right
        spec = ConvSpec(1, 1, kernel=2)
        lp = make_layer(spec, np.ones((1, 1, 2, 2)))
        x = Tensor(np.ones((1, 1, 2, 2)), dtype=np.float64)
        with no_grad():
            out = conv2d(x, spec, lp)
        # windows at (0,0),(0,1),(1,0),(1,1); padding only below/right
        assert np.array_equal(out.data[0, 0], np.array([[4.0, 2.0], [2.0, 1.0]]))

    def test_gradients_match_finite_differences(self):
        spec = ConvSpec(2, 3, kernel=3, stride=2, dilation=1)
        lp = init_params(spec, 7, dtype=np.float64)
        x = rand64(8, (1, 2, 6, 5))
        proj = rng.uniform(101, 3 * 3 * 3).reshape(1, 3, 3, 3) * 2.0 - 1.0

        def loss():
            with no_grad():
                return float(np.sum(conv2d(x, spec, lp).data * proj))

        out = conv2d(x, spec, lp)
        (out * Tensor(proj, dtype=np.float64)).sum().backward()
        step = 1e-5
        for t in (x, lp.weight, lp.bias):
            flat = t.data.reshape(-1)
            fd = np.zeros_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                f_plus = loss()
                flat[i] = orig - step
                f_minus = loss()
                flat[i] = orig
                fd[i] = (f_plus - f_minus) / (2 * step)
            ad = t.grad.reshape(-1)
            scale = max(np.abs(ad).max(), np.abs(fd).max(), 1e-12)
            assert np.abs(ad - fd).max() / scale < 1e-6


class TestTransposedConv2d:
    def test_single_tap(self):
        spec = ConvSpec(1, 1, kernel=2, stride=2, transposed=True)
        k = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
        lp = make_layer(spec, k)
        x = Tensor(np.full((1, 1, 1, 1), 3.0), dtype=np.float64)
        with no_grad():
            out = transposed_conv2d(x, spec, lp)
        assert np.array_equal(out.data, 3.0 * k)

    def test_zero_weights_zero_output(self):
        spec = ConvSpec(3, 2, kernel=2, stride=2, transposed=True)
        lp = make_layer(spec, np.zeros(spec.weight_shape))
        with no_grad():
            out = transposed_conv2d(rand64(5, (1, 3, 4, 4), requires_grad=False), spec, lp)
        assert np.array_equal(out.data, np.zeros((1, 2, 8, 8)))

    def test_upsampling_shape(self):
        spec = ConvSpec(4, 2, kernel=2, stride=2, transposed=True)
        lp = init_params(spec, 1, dtype=np.float64)
        with no_grad():
            out = transposed_conv2d(rand64(6, (2, 4, 3, 5), requires_grad=False), spec, lp)
        assert out.shape == (2, 2, 6, 10)

    def test_channel_mismatch_rejected(self):
        spec = ConvSpec(4, 2, kernel=2, stride=2, transposed=True)
        lp = init_params(spec, 1, dtype=np.float64)
        with pytest.raises(ValueError, match="channel"):
            transposed_conv2d(rand64(7, (1, 3, 4, 4)), spec, lp)

    def test_adjoint_identity_brute_force(self):
        # <conv(x), y> == <x, tconv(y)> on random geometry up to 4x4, 100 trials
        worst = 0.0
        for trial in range(100):
            h = rng.hash64("adjoint", trial)
            u = rng.uniform(h, 8)
            cin = 1 + int(u[0] * 3)
            cout = 1 + int(u[1] * 3)
            k = 1 + int(u[2] * 3)
            s = 1 + int(u[3] * 2)
            d = 1 + int(u[4] * 2)
            hh = s * (1 + int(u[5] * (4 // s - 1 + 1e-9)) if s <= 4 else 1)
            ww = s * (1 + int(u[6] * (4 // s - 1 + 1e-9)) if s <= 4 else 1)
            cspec = ConvSpec(cin, cout, kernel=k, stride=s, dilation=d)
            tspec = ConvSpec(cout, cin, kernel=k, stride=s, dilation=d, transposed=True)
            w = init_params(cspec, rng.hash64(h, "w"), dtype=np.float64).weight
            lp_c = LayerParams("c", cspec, w, Tensor(np.zeros(cout)))
            lp_t = LayerParams("t", tspec, Tensor(w.data.copy()), Tensor(np.zeros(cin)))
            x = rand64(rng.hash64(h, "x"), (1, cin, hh, ww), requires_grad=False)
            oh, ow = -(-hh // s), -(-ww // s)
            y = rand64(rng.hash64(h, "y"), (1, cout, oh, ow), requires_grad=False)
            with no_grad():
                cx = conv2d(x, cspec, lp_c)
                ty = transposed_conv2d(y, tspec, lp_t)
            worst = max(worst, abs(float(np.sum(cx.data * y.data))
                                   - float(np.sum(x.data * ty.data))))
        assert worst < 1e-10


class TestAvgPool:
    def test_window_mean(self):
        x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]), dtype=np.float64)
        with no_grad():
            out = avg_pool2d(x)
        assert out.data[0, 0, 0, 0] == 2.5

    def test_constant_preserved(self):
        x = Tensor(np.full((2, 3, 4, 4), 7.25), dtype=np.float64)
        with no_grad():
            out = avg_pool2d(x)
        assert np.array_equal(out.data, np.full((2, 3, 2, 2), 7.25))

    def test_gradient_is_quarter_everywhere(self):
        x = rand64(9, (1, 2, 4, 4))
        avg_pool2d(x).sum().backward()
        assert np.array_equal(x.grad, np.full((1, 2, 4, 4), 0.25))

    def test_odd_extents_rejected(self):
        with pytest.raises(ValueError, match="divisible"):
            avg_pool2d(rand64(10, (1, 1, 3, 4)))


class TestInitParams:
    def test_deterministic(self):
        spec = ConvSpec(3, 8, kernel=3)
        a = init_params(spec, 123)
        b = init_params(spec, 123)
        assert np.array_equal(a.weight.data, b.weight.data)
        assert np.array_equal(a.bias.data, b.bias.data)

    def test_different_seed_differs(self):
        spec = ConvSpec(3, 8, kernel=3)
        assert not np.array_equal(init_params(spec, 1).weight.data,
                                  init_params(spec, 2).weight.data)

    def test_bias_all_zero(self):
        lp = init_params(ConvSpec(4, 4, kernel=3), 5)
        assert np.array_equal(lp.bias.data, np.zeros(4))

    def test_uniform_statistics(self):
        # n >= 1e4 draws: sample mean within 3 * L / sqrt(3n), values within [-L, L]
        spec = ConvSpec(32, 36, kernel=3)  # 32*36*9 = 10368 draws
        lp = init_params(spec, 77, dtype=np.float64)
        bound = glorot_bound(spec)
        n = lp.weight.size
        assert n >= 10_000
        assert np.abs(lp.weight.data).max() <= bound
        assert abs(float(lp.weight.data.mean())) <= 3.0 * bound / np.sqrt(3.0 * n)

    def test_weight_shape_follows_spec(self):
        assert init_params(ConvSpec(2, 5, kernel=3), 0).weight.shape == (5, 2, 3, 3)
        tspec = ConvSpec(2, 5, kernel=2, stride=2, transposed=True)
        assert init_params(tspec, 0).weight.shape == (2, 5, 2, 2)


class TestConvOutputSize:
    def test_same_is_ceil(self):
        assert conv_output_size(7, 3, 2, 1, "same") == 4
        assert conv_output_size(8, 3, 2, 1, "same") == 4

    def test_valid_requires_room(self):
        assert conv_output_size(5, 3, 1, 1, "valid") == 3
        with pytest.raises(ValueError):
            conv_output_size(2, 3, 1, 1, "valid")
