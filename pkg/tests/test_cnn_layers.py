import numpy as np
import pytest

from sweikit.cnn import layers as L
from sweikit.cnn.gradcheck import max_rel_error
from sweikit.cnn.network import (
    ArchSpec,
    head_channels,
    init_params,
    load_params,
    net_backward,
    net_forward,
    save_params,
)
from sweikit.errors import ShapeMismatchError

rng = np.random.default_rng(0)

GRAD_TOL = 1e-4


def tiny_arch(**kw):
    defaults = dict(stem_channels=(2, 2, 2), growth_rate=2, window_size=9,
                    spatial_stride=1, frames=8)
    defaults.update(kw)
    return ArchSpec(**defaults)


class TestConv3:
    def test_pointwise_identity(self):
        x = rng.normal(size=(2, 1, 3, 4, 5))
        w = np.ones((1, 1, 1, 1, 1))
        b = np.zeros(1)
        y, _ = L.conv3_forward(x, w, b, stride=1, pad=0)
        np.testing.assert_array_equal(y, x)

    def test_all_ones_kernel_sums_constant(self):
        x = np.full((1, 1, 5, 5, 5), 2.0)
        w = np.ones((1, 1, 3, 3, 3))
        b = np.zeros(1)
        y, _ = L.conv3_forward(x, w, b, stride=1, pad=1)
        # interior voxels see the full 27-point neighborhood
        assert y[0, 0, 2, 2, 2] == pytest.approx(27 * 2.0)

    def test_channel_mismatch_raises(self):
        x = rng.normal(size=(1, 2, 4, 4, 4))
        w = rng.normal(size=(3, 4, 3, 3, 3))
        with pytest.raises(ShapeMismatchError):
            L.conv3_forward(x, w, np.zeros(3))

    def test_gradients_match_finite_differences(self):
        x = rng.normal(size=(2, 3, 4, 5, 6))
        w = rng.normal(size=(4, 3, 3, 3, 3))
        b = rng.normal(size=4)
        dout = rng.normal(size=(2, 4, 2, 3, 6))

        def loss():
            y, _ = L.conv3_forward(x, w, b, stride=(2, 2, 1), pad=1)
            return float((y * dout).sum())

        _, cache = L.conv3_forward(x, w, b, stride=(2, 2, 1), pad=1)
        dx, dw, db = L.conv3_backward(dout, cache)
        assert max_rel_error(loss, x, dx, eps=1e-4) < GRAD_TOL
        assert max_rel_error(loss, w, dw, eps=1e-4) < GRAD_TOL
        assert max_rel_error(loss, b, db, eps=1e-4) < GRAD_TOL


class TestBatchNorm:
    def test_standardized_input_unchanged(self):
        x = rng.normal(size=(4, 3, 2, 2, 5))
        x = (x - x.mean(axis=(0, 2, 3, 4), keepdims=True)) / x.std(
            axis=(0, 2, 3, 4), keepdims=True
        )
        gamma, beta = np.ones(3), np.zeros(3)
        rm, rv = np.zeros(3), np.ones(3)
        y, _ = L.bn_forward(x, gamma, beta, rm, rv, training=True)
        np.testing.assert_allclose(y, x, rtol=1e-5, atol=1e-5)

    def test_training_mode_standardizes(self):
        x = rng.normal(loc=3.0, scale=2.5, size=(4, 3, 2, 3, 5))
        gamma, beta = np.ones(3), np.zeros(3)
        rm, rv = np.zeros(3), np.ones(3)
        y, _ = L.bn_forward(x, gamma, beta, rm, rv, training=True)
        np.testing.assert_allclose(y.mean(axis=(0, 2, 3, 4)), 0.0, atol=1e-5)
        np.testing.assert_allclose(y.var(axis=(0, 2, 3, 4)), 1.0, atol=1e-4)

    def test_running_stats_track(self):
        x = rng.normal(loc=2.0, size=(8, 2, 2, 2, 4))
        gamma, beta = np.ones(2), np.zeros(2)
        rm, rv = np.zeros(2), np.ones(2)
        for _ in range(60):
            L.bn_forward(x, gamma, beta, rm, rv, training=True)
        np.testing.assert_allclose(rm, x.mean(axis=(0, 2, 3, 4)), atol=1e-2)

    def test_gradients_match_finite_differences(self):
        x = rng.normal(size=(3, 4, 2, 3, 5))
        gamma = rng.normal(size=4) + 1.5
        beta = rng.normal(size=4)
        dout = rng.normal(size=x.shape)

        def loss():
            rm, rv = np.zeros(4), np.ones(4)
            y, _ = L.bn_forward(x, gamma, beta, rm, rv, training=True)
            return float((y * dout).sum())

        rm, rv = np.zeros(4), np.ones(4)
        _, cache = L.bn_forward(x, gamma, beta, rm, rv, training=True)
        dx, dgamma, dbeta = L.bn_backward(dout, cache)
        assert max_rel_error(loss, x, dx, eps=1e-4) < GRAD_TOL
        assert max_rel_error(loss, gamma, dgamma, eps=1e-4) < GRAD_TOL
        assert max_rel_error(loss, beta, dbeta, eps=1e-4) < GRAD_TOL


class TestPooling:
    def test_avgpool_forward_blocks(self):
        x = np.arange(16, dtype=np.float64).reshape(1, 1, 2, 2, 4)
        y, _ = L.avgpool3_forward(x, 2)
        assert y.shape == (1, 1, 1, 1, 2)
        assert y[0, 0, 0, 0, 0] == pytest.approx(x[0, 0, :, :, :2].mean())

    def test_avgpool_gradcheck(self):
        x = rng.normal(size=(2, 2, 4, 5, 6))
        dout = rng.normal(size=(2, 2, 2, 2, 3))

        def loss():
            y, _ = L.avgpool3_forward(x, 2)
            return float((y * dout).sum())

        _, cache = L.avgpool3_forward(x, 2)
        dx = L.avgpool3_backward(dout, cache)
        assert max_rel_error(loss, x, dx, eps=1e-4) < GRAD_TOL

    def test_global_avgpool_gradcheck(self):
        x = rng.normal(size=(3, 4, 2, 3, 4))
        dout = rng.normal(size=(3, 4))

        def loss():
            y, _ = L.global_avgpool_forward(x)
            return float((y * dout).sum())

        _, cache = L.global_avgpool_forward(x)
        dx = L.global_avgpool_backward(dout, cache)
        assert max_rel_error(loss, x, dx, eps=1e-4) < GRAD_TOL


class TestDenseBlockShape:
    def test_output_channel_arithmetic(self):
        arch = tiny_arch(stem_channels=(2, 3, 4), growth_rate=5)
        assert head_channels(arch) == 4 + 3 * 4 * 5

    def test_zero_input_zero_biases_zero_output(self):
        arch = tiny_arch()
        params = init_params(arch, seed=0, dtype=np.float64)
        # beta = 0 -> BN output 0 at zero input in eval mode; ReLU keeps 0
        x = np.zeros((2, 9, 9, 8))
        pred, _ = net_forward(params, x, training=False)
        np.testing.assert_allclose(pred, params.tensors["head.b"], atol=1e-12)

    def test_block_gradcheck_end_to_end(self):
        # gradients flow through the dense concatenation exactly
        arch = tiny_arch()
        params = init_params(arch, seed=3, dtype=np.float64)
        x = np.asarray(rng.normal(size=(3, 9, 9, 8)))
        target = np.asarray(rng.normal(size=3))

        def loss():
            pred, _ = net_forward(params, x, training=True)
            l, _ = L.mse_loss(pred, target)
            return l

        pred, caches = net_forward(params, x, training=True)
        _, dpred = L.mse_loss(pred, target)
        grads = net_backward(params, caches, dpred)
        for name in ["block0.0.w", "block1.2.gamma", "block2.3.w", "block2.0.beta"]:
            p = params.tensors[name]
            idx = rng.choice(p.size, size=min(8, p.size), replace=False)
            err = max_rel_error(loss, p, grads[name], eps=1e-6, indices=idx)
            assert err < GRAD_TOL, name


class TestLoss:
    def test_zero_when_equal(self):
        loss, grad = L.mse_loss(np.array([1.0, 2.0]), np.array([1.0, 2.0]))
        assert loss == 0.0
        np.testing.assert_array_equal(grad, 0.0)

    def test_hand_computed_value(self):
        loss, _ = L.mse_loss(np.array([13.0, 16.0]), np.array([10.0, 20.0]))
        assert loss == pytest.approx(12.5)

    def test_gradient_formula(self):
        pred = np.array([3.0, -1.0, 7.0])
        target = np.array([1.0, 0.0, 7.5])
        loss, grad = L.mse_loss(pred, target)
        np.testing.assert_allclose(grad, 2.0 * (pred - target) / 3.0)
        # finite difference confirmation
        eps = 1e-6
        for i in range(3):
            p = pred.copy()
            p[i] += eps
            lp, _ = L.mse_loss(p, target)
            p[i] -= 2 * eps
            lm, _ = L.mse_loss(p, target)
            assert (lp - lm) / (2 * eps) == pytest.approx(grad[i], rel=1e-5)


class TestFullNetwork:
    def test_full_gradcheck_both_modes(self):
        arch = tiny_arch()
        for training in (True, False):
            params = init_params(arch, seed=11, dtype=np.float64)
            check_rng = np.random.default_rng(5)
            x = check_rng.normal(size=(4, 9, 9, 8))
            target = check_rng.normal(size=4) + 1.0
            if not training:
                net_forward(params, x, training=True)  # warm running stats

            def loss():
                pred, _ = net_forward(params, x, training=training)
                l, _ = L.mse_loss(pred, target)
                return l

            pred, caches = net_forward(params, x, training=training)
            _, dpred = L.mse_loss(pred, target)
            grads = net_backward(params, caches, dpred)
            pick = np.random.default_rng(7)
            for name, p in params.tensors.items():
                if name.endswith(("rmean", "rvar")):
                    continue
                idx = pick.choice(p.size, size=min(6, p.size), replace=False)
                err = max_rel_error(loss, p, grads[name], eps=1e-6, indices=idx)
                assert err < GRAD_TOL, (name, training, err)

    def test_stride_rule_enforced(self):
        with pytest.raises(ValueError):
            ArchSpec(window_size=5, spatial_stride=2)
        assert ArchSpec.for_window(5).spatial_stride == 1
        assert ArchSpec.for_window(33).spatial_stride == 2

    def test_serialization_roundtrip_bit_identical(self, tmp_path):
        arch = tiny_arch()
        params = init_params(arch, seed=2)
        x = rng.normal(size=(3, 9, 9, 8)).astype(np.float32)
        net_forward(params, x, training=True)  # give running stats real values
        before, _ = net_forward(params, x, training=False)
        path = tmp_path / "model.bin"
        save_params(params, path)
        loaded = load_params(path)
        after, _ = net_forward(loaded, x, training=False)
        assert before.tobytes() == after.tobytes()
        assert loaded.arch == arch
        assert loaded.step == params.step
