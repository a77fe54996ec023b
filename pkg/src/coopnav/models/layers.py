"""Minimal convolutional layers with hand-written backward passes.

Everything operates on channel-first batches (B, C, H, W). Each layer caches
what its backward pass needs; `backward` consumes the upstream gradient and
returns the input gradient, accumulating parameter gradients on the layer.
"""

from __future__ import annotations

import numpy as np


class Layer:
    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def parameters(self) -> list[tuple[str, np.ndarray, np.ndarray]]:
        """(name, value, gradient) triples; empty for stateless layers."""
        return []

    def zero_grad(self) -> None:
        for _, _, grad in self.parameters():
            grad[...] = 0.0


class Conv2d(Layer):
    """3x3 zero-padded convolution, stride 1 or 2 (output side = ceil(in/stride))."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        stride: int = 1,
        kernel: int = 3,
        rng: np.random.Generator | None = None,
        dtype=np.float64,
    ):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.stride = stride
        self.kernel = kernel
        self.pad = kernel // 2
        bound = 1.0 / np.sqrt(in_channels * kernel * kernel)
        if rng is None:
            rng = np.random.default_rng(0)
        self.weight = rng.uniform(
            -bound, bound, size=(out_channels, in_channels, kernel, kernel)
        ).astype(dtype)
        self.bias = np.zeros(out_channels, dtype=dtype)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._x_pad: np.ndarray | None = None
        self._in_shape: tuple | None = None

    def parameters(self):
        return [
            ("weight", self.weight, self.grad_weight),
            ("bias", self.bias, self.grad_bias),
        ]

    def out_side(self, side: int) -> int:
        return (side + 2 * self.pad - self.kernel) // self.stride + 1

    def forward(self, x: np.ndarray) -> np.ndarray:
        batch, _, height, width = x.shape
        p, k, s = self.pad, self.kernel, self.stride
        x_pad = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        out_h = self.out_side(height)
        out_w = self.out_side(width)
        y = np.tile(
            self.bias[None, :, None, None], (batch, 1, out_h, out_w)
        ).astype(x.dtype)
        for i in range(k):
            for j in range(k):
                patch = x_pad[:, :, i : i + s * out_h : s, j : j + s * out_w : s]
                y += np.einsum("bchw,oc->bohw", patch, self.weight[:, :, i, j])
        self._x_pad = x_pad
        self._in_shape = x.shape
        return y

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x_pad = self._x_pad
        batch, _, height, width = self._in_shape
        p, k, s = self.pad, self.kernel, self.stride
        out_h, out_w = grad_out.shape[2], grad_out.shape[3]
        self.grad_bias += grad_out.sum(axis=(0, 2, 3))
        grad_x_pad = np.zeros_like(x_pad)
        for i in range(k):
            for j in range(k):
                patch = x_pad[:, :, i : i + s * out_h : s, j : j + s * out_w : s]
                self.grad_weight[:, :, i, j] += np.einsum(
                    "bohw,bchw->oc", grad_out, patch
                )
                grad_x_pad[:, :, i : i + s * out_h : s, j : j + s * out_w : s] += (
                    np.einsum("bohw,oc->bchw", grad_out, self.weight[:, :, i, j])
                )
        return grad_x_pad[:, :, p : p + height, p : p + width]


class ReLU(Layer):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return grad_out * self._mask


class Sigmoid(Layer):
    def forward(self, x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        e = np.exp(x[~pos])
        out[~pos] = e / (1.0 + e)
        self._out = out
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return grad_out * self._out * (1.0 - self._out)


class NearestUpsample2x(Layer):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return x.repeat(2, axis=2).repeat(2, axis=3)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        b, c, h2, w2 = grad_out.shape
        return grad_out.reshape(b, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5))


class CropTo(Layer):
    """Crop trailing rows/cols down to a target side (undoes upsample overshoot)."""

    def __init__(self, side: int):
        self.side = side

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._in_shape = x.shape
        return x[:, :, : self.side, : self.side]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        grad = np.zeros(self._in_shape, dtype=grad_out.dtype)
        grad[:, :, : self.side, : self.side] = grad_out
        return grad
