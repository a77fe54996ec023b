"""Finite-difference checks of every layer and both full networks.

Central differences with float64 and h=1e-6 give ~1e-10 truncation error, so
the 1e-4 relative tolerance leaves a wide margin.
"""

import numpy as np
import pytest

from coopnav.models.layers import Conv2d, CropTo, NearestUpsample2x, ReLU, Sigmoid
from coopnav.models.network import build_continuous_encdec, build_discrete_fcn
from coopnav.models.neural import _valid_stack, fused_loss_and_grad

H_STEP = 1e-6
TOL = 1e-4


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    # Entries are compared relatively above the 1e-5 floor and absolutely
    # (at TOL * 1e-5 = 1e-9) below it: central differences on an O(1) loss
    # at h=1e-6 carry ~1e-10 roundoff, so gradients under 1e-5 cannot be
    # resolved to a tighter relative precision than that by any oracle.
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-5)
    return float(np.max(np.abs(a - b) / denom))


def scalar_head(y: np.ndarray, weights: np.ndarray) -> float:
    """Fixed random linear functional; turns any output into a scalar loss."""
    return float((y * weights).sum())


def fd_grad(fun, arr: np.ndarray) -> np.ndarray:
    grad = np.zeros_like(arr)
    flat = arr.ravel()
    grad_flat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + H_STEP
        up = fun()
        flat[i] = orig - H_STEP
        down = fun()
        flat[i] = orig
        grad_flat[i] = (up - down) / (2 * H_STEP)
    return grad


def check_layer(layer, x: np.ndarray):
    rng = np.random.default_rng(99)
    y = layer.forward(x.copy())
    head = rng.normal(size=y.shape)

    layer.zero_grad()
    grad_in = layer.backward(head.copy())

    def loss():
        return scalar_head(layer.forward(x), head)

    fd_in = fd_grad(loss, x)
    assert rel_err(grad_in, fd_in) < TOL, "input gradient mismatch"

    for name, value, grad in layer.parameters():
        fd_p = fd_grad(loss, value)
        assert rel_err(grad, fd_p) < TOL, f"{name} gradient mismatch"


class TestLayerGradients:
    def test_conv_stride1(self):
        rng = np.random.default_rng(0)
        layer = Conv2d(3, 4, stride=1, rng=rng)
        check_layer(layer, rng.normal(size=(2, 3, 5, 5)))

    def test_conv_stride2(self):
        rng = np.random.default_rng(1)
        layer = Conv2d(2, 3, stride=2, rng=rng)
        check_layer(layer, rng.normal(size=(2, 2, 5, 5)))

    def test_relu(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(2, 3, 5, 5))
        x[np.abs(x) < 0.05] = 0.1  # keep clear of the kink
        check_layer(ReLU(), x)

    def test_sigmoid(self):
        rng = np.random.default_rng(3)
        check_layer(Sigmoid(), rng.normal(size=(2, 2, 5, 5)))

    def test_upsample(self):
        rng = np.random.default_rng(4)
        check_layer(NearestUpsample2x(), rng.normal(size=(1, 2, 5, 5)))

    def test_crop(self):
        rng = np.random.default_rng(5)
        check_layer(CropTo(5), rng.normal(size=(1, 2, 6, 6)))


def check_network(net, x, labels):
    valid = _valid_stack(x)
    net.zero_grad()
    logits = net.forward_logits(x)
    _, dlogits = fused_loss_and_grad(logits, labels, valid, pos_weight=2.0)
    net.backward(dlogits)

    def loss():
        z = net.forward_logits(x)
        value, _ = fused_loss_and_grad(z, labels, valid, pos_weight=2.0)
        return value

    worst = 0.0
    for name, value, grad in net.parameters():
        fd = fd_grad(loss, value)
        err = rel_err(grad, fd)
        worst = max(worst, err)
        assert err < TOL, f"{name}: rel err {err}"
    return worst


def jitter_biases(net, rng):
    # Zero biases put whole zero-padding windows exactly on the ReLU kink,
    # where finite differences straddle the non-differentiability.
    for name, value, _ in net.parameters():
        if name.endswith("bias"):
            value += rng.uniform(0.05, 0.2, size=value.shape)


class TestNetworkGradients:
    def test_discrete_fcn_every_parameter(self):
        rng = np.random.default_rng(10)
        net = build_discrete_fcn(seed=1, widths=(3, 4, 3))
        jitter_biases(net, rng)
        x = rng.random((2, 4, 5, 5))
        labels = np.zeros((2, 2, 5, 5))
        valid = _valid_stack(x)
        labels[(rng.random((2, 2, 5, 5)) > 0.7) & valid] = 1.0
        check_network(net, x, labels)

    def test_continuous_encdec_every_parameter(self):
        rng = np.random.default_rng(11)
        net = build_continuous_encdec(seed=2, base=2)
        jitter_biases(net, rng)
        # Odd side exercises the upsample-overshoot crop path: 5 -> 3 -> 2 -> 1.
        x = rng.random((1, 4, 5, 5))
        labels = np.zeros((1, 2, 5, 5))
        valid = _valid_stack(x)
        labels[(rng.random((1, 2, 5, 5)) > 0.7) & valid] = 1.0
        check_network(net, x, labels)


class TestFusedLoss:
    def test_gradient_matches_finite_difference(self):
        rng = np.random.default_rng(12)
        logits = rng.normal(size=(2, 2, 4, 4))
        labels = (rng.random((2, 2, 4, 4)) > 0.6).astype(np.float64)
        valid = rng.random((2, 2, 4, 4)) > 0.3
        labels *= valid
        _, grad = fused_loss_and_grad(logits, labels, valid, pos_weight=3.0)

        def loss():
            value, _ = fused_loss_and_grad(logits, labels, valid, pos_weight=3.0)
            return value

        fd = fd_grad(loss, logits)
        assert rel_err(grad, fd) < TOL

    def test_weight_scales_positive_terms_only(self):
        # Two-cell case recomputed by hand: w=2 doubles exactly the y=1 term.
        logits = np.array([[[[0.4, -0.3]]]])
        labels = np.array([[[[1.0, 0.0]]]])
        valid = np.ones_like(labels, dtype=bool)
        l1, _ = fused_loss_and_grad(logits, labels, valid, pos_weight=1.0)
        l2, _ = fused_loss_and_grad(logits, labels, valid, pos_weight=2.0)
        p = 1 / (1 + np.exp(-0.4))
        q = 1 / (1 + np.exp(0.3))
        assert l1 == pytest.approx((-np.log(p) - np.log(1 - q)) / 2)
        assert l2 == pytest.approx((-2 * np.log(p) - np.log(1 - q)) / 2)
