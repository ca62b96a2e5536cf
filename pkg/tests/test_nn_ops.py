"""Finite-difference checks for every primitive's backward pass (float64)."""

import numpy as np
import pytest

from lesionforge.nn import ops


def numeric_grad(f, x, h=1e-6):
    """Central differences of scalar-valued f at x, elementwise."""
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * h)
    return g


def check(analytic, numeric, tol=1e-5):
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    rel = np.abs(analytic - numeric) / denom
    assert rel.max() < tol, f"max rel err {rel.max():.2e}"


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1)])
def test_conv2d_grads(stride, pad):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 3, 6, 6))
    w = rng.standard_normal((4, 3, 4, 4)) * 0.3
    b = rng.standard_normal(4) * 0.1
    r = rng.standard_normal(ops.conv2d_forward(x, w, b, stride, pad)[0].shape)

    def loss():
        out, _ = ops.conv2d_forward(x, w, b, stride, pad)
        return float((out * r).sum())

    out, cache = ops.conv2d_forward(x, w, b, stride, pad)
    dx, dw, db = ops.conv2d_backward(cache, r)
    check(dx, numeric_grad(loss, x))
    check(dw, numeric_grad(loss, w))
    check(db, numeric_grad(loss, b))


def test_dense_grads():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((3, 5))
    w = rng.standard_normal((5, 4))
    b = rng.standard_normal(4)
    r = rng.standard_normal((3, 4))

    def loss():
        return float((ops.dense_forward(x, w, b)[0] * r).sum())

    _, cache = ops.dense_forward(x, w, b)
    dx, dw, db = ops.dense_backward(cache, r)
    check(dx, numeric_grad(loss, x))
    check(dw, numeric_grad(loss, w))
    check(db, numeric_grad(loss, b))


def test_leaky_relu_grad():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((4, 7)) + 0.05  # keep away from the kink
    r = rng.standard_normal((4, 7))

    def loss():
        return float((ops.leaky_relu_forward(x, 0.2)[0] * r).sum())

    _, cache = ops.leaky_relu_forward(x, 0.2)
    check(ops.leaky_relu_backward(cache, r), numeric_grad(loss, x))


def test_tanh_grad():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 6))
    r = rng.standard_normal((2, 6))

    def loss():
        return float((ops.tanh_forward(x)[0] * r).sum())

    _, cache = ops.tanh_forward(x)
    check(ops.tanh_backward(cache, r), numeric_grad(loss, x))


@pytest.mark.parametrize("mode", ["train", "eval"])
def test_batchnorm_grads(mode):
    rng = np.random.default_rng(4)
    x = rng.standard_normal((4, 3, 5, 5))
    gamma = rng.uniform(0.5, 1.5, 3)
    beta = rng.standard_normal(3)
    rm = rng.standard_normal(3) * 0.1
    rv = rng.uniform(0.5, 1.5, 3)
    r = rng.standard_normal(x.shape)

    def loss():
        out, _, _, _ = ops.batchnorm2d_forward(x, gamma, beta, rm, rv, mode)
        return float((out * r).sum())

    _, cache, _, _ = ops.batchnorm2d_forward(x, gamma, beta, rm, rv, mode)
    dx, dgamma, dbeta = ops.batchnorm2d_backward(cache, r)
    check(dx, numeric_grad(loss, x), tol=1e-5)
    check(dgamma, numeric_grad(loss, gamma), tol=1e-6)
    check(dbeta, numeric_grad(loss, beta), tol=1e-6)


def test_batchnorm_train_normalizes():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((8, 2, 4, 4)) * 3 + 1
    out, _, new_mean, new_var = ops.batchnorm2d_forward(
        x, np.ones(2), np.zeros(2), np.zeros(2), np.ones(2), "train"
    )
    np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0, atol=1e-10)
    np.testing.assert_allclose(out.var(axis=(0, 2, 3)), 1, atol=1e-3)
    # running stats move toward the batch stats by the momentum factor
    np.testing.assert_allclose(new_mean, 0.1 * x.mean(axis=(0, 2, 3)), atol=1e-12)


def test_upsample_grads():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((2, 3, 4, 4))
    r = rng.standard_normal((2, 3, 8, 8))

    def loss():
        return float((ops.upsample2x_forward(x)[0] * r).sum())

    _, cache = ops.upsample2x_forward(x)
    check(ops.upsample2x_backward(cache, r), numeric_grad(loss, x))


def test_upsample_repeats_nearest():
    x = np.arange(4.0).reshape(1, 1, 2, 2)
    out, _ = ops.upsample2x_forward(x)
    np.testing.assert_array_equal(out[0, 0], [[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 3, 3], [2, 2, 3, 3]])


def test_dropout_grad_and_scaling():
    rng_mask = np.random.default_rng(7)
    x = np.abs(np.random.default_rng(8).standard_normal((50, 50))) + 0.1
    out, cache = ops.dropout_forward(x, 0.5, rng_mask)
    keep, scale = cache
    np.testing.assert_array_equal(out, x * keep * 2.0)
    r = np.ones_like(x)
    np.testing.assert_array_equal(ops.dropout_backward(cache, r), keep * 2.0)
    # same seed -> same mask
    out2, _ = ops.dropout_forward(x, 0.5, np.random.default_rng(7))
    np.testing.assert_array_equal(out, out2)


class TestBceLogits:
    def test_zero_logits_closed_form(self):
        z = np.zeros((3, 4))
        assert ops.bce_logits(z, 1.0) == pytest.approx(np.log(2), abs=1e-12)
        assert ops.bce_logits(z, 0.0) == pytest.approx(np.log(2), abs=1e-12)

    def test_extreme_logits_stable(self):
        assert ops.bce_logits(np.full((2, 2), 1000.0), 1.0) == pytest.approx(0.0, abs=1e-12)
        assert ops.bce_logits(np.full((2, 2), -1000.0), 0.0) == pytest.approx(0.0, abs=1e-12)
        assert np.isfinite(ops.bce_logits(np.array([[-1e6, 1e6]]), 1.0))

    def test_matches_naive_formula_in_safe_range(self):
        rng = np.random.default_rng(9)
        z = rng.uniform(-5, 5, size=(4, 4))
        for y in (0.0, 1.0):
            p = 1.0 / (1.0 + np.exp(-z))
            naive = float(-(y * np.log(p) + (1 - y) * np.log(1 - p)).mean())
            assert ops.bce_logits(z, y) == pytest.approx(naive, rel=1e-10)

    def test_grad(self):
        rng = np.random.default_rng(10)
        z = rng.uniform(-3, 3, size=(3, 5))

        for y in (0.0, 1.0):
            def loss():
                return ops.bce_logits(z, y)

            check(ops.bce_logits_grad(z, y), numeric_grad(loss, z), tol=1e-6)


def test_l1_matches_bruteforce_and_grad():
    rng = np.random.default_rng(11)
    a = rng.standard_normal((6, 6))
    b = rng.standard_normal((6, 6))
    brute = sum(abs(float(x) - float(y)) for x, y in zip(a.ravel(), b.ravel())) / a.size
    assert ops.l1_mean(a, b) == pytest.approx(brute, abs=1e-6)

    def loss():
        return ops.l1_mean(a, b)

    check(ops.l1_mean_grad(a, b), numeric_grad(loss, a), tol=1e-5)
