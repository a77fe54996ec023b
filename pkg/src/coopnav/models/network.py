"""Convolutional networks assembled from stages, plus the checkpoint format.

A stage is one convolution with an optional ReLU, optionally preceded by a
nearest-neighbor x2 upsample (decoder side). Strided stages record the input
side on the way down so the matching upsample can crop back to it exactly,
which keeps the network usable at any input resolution (the gradient checks
run it on tiny toy inputs).
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

from .layers import Conv2d, CropTo, NearestUpsample2x, ReLU

MAGIC = b"CNVNET1\n"

ARCH_DISCRETE = "discrete-fcn"
ARCH_CONTINUOUS = "continuous-encdec"


@dataclass
class Stage:
    conv: Conv2d
    relu: ReLU | None
    upsample_before: bool = False
    # runtime helpers (rebuilt every forward)
    _up: NearestUpsample2x | None = None
    _crop: CropTo | None = None


class ConvNet:
    def __init__(self, arch: str, stages: list[Stage]):
        self.arch = arch
        self.stages = stages

    # -- plumbing ---------------------------------------------------------
    def parameters(self):
        out = []
        for idx, stage in enumerate(self.stages):
            for name, value, grad in stage.conv.parameters():
                out.append((f"conv{idx}.{name}", value, grad))
        return out

    def zero_grad(self):
        for _, _, grad in self.parameters():
            grad[...] = 0.0

    def copy_params(self) -> list[np.ndarray]:
        return [value.copy() for _, value, _ in self.parameters()]

    def load_params(self, values: list[np.ndarray]) -> None:
        params = self.parameters()
        if len(values) != len(params):
            raise ValueError("parameter count mismatch")
        for (_, value, _), new in zip(params, values):
            if value.shape != new.shape:
                raise ValueError(f"shape mismatch {value.shape} vs {new.shape}")
            value[...] = new

    # -- forward / backward -----------------------------------------------
    def forward_logits(self, x: np.ndarray) -> np.ndarray:
        down_sides: list[int] = []
        for stage in self.stages:
            if stage.upsample_before:
                stage._up = NearestUpsample2x()
                x = stage._up.forward(x)
                target = down_sides.pop()
                if x.shape[-1] != target:
                    stage._crop = CropTo(target)
                    x = stage._crop.forward(x)
                else:
                    stage._crop = None
            else:
                stage._up = None
                stage._crop = None
            if stage.conv.stride > 1:
                down_sides.append(x.shape[-1])
            x = stage.conv.forward(x)
            if stage.relu is not None:
                x = stage.relu.forward(x)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for stage in reversed(self.stages):
            if stage.relu is not None:
                grad = stage.relu.backward(grad)
            grad = stage.conv.backward(grad)
            if stage._crop is not None:
                grad = stage._crop.backward(grad)
            if stage._up is not None:
                grad = stage._up.backward(grad)
        return grad

    def predict_raw(self, x: np.ndarray) -> np.ndarray:
        """Sigmoid probabilities without the belief mask (B, 2, H, W)."""
        logits = self.forward_logits(x)
        out = np.empty_like(logits)
        pos = logits >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
        e = np.exp(logits[~pos])
        out[~pos] = e / (1.0 + e)
        return out


def build_discrete_fcn(
    seed: int = 0, widths: tuple[int, ...] = (16, 32, 16), dtype=np.float64
) -> ConvNet:
    """Four 3x3 stride-1 convolutions ending in 2 output channels."""
    rng = np.random.default_rng(seed)
    channels = [4, *widths, 2]
    stages = []
    for i in range(len(channels) - 1):
        relu = ReLU() if i < len(channels) - 2 else None
        stages.append(
            Stage(Conv2d(channels[i], channels[i + 1], stride=1, rng=rng, dtype=dtype), relu)
        )
    return ConvNet(ARCH_DISCRETE, stages)


def build_continuous_encdec(seed: int = 0, base: int = 16, dtype=np.float64) -> ConvNet:
    """Encoder-decoder: 6 down convs (three strided), a 64-channel bottleneck
    at 1/8 resolution, and 6 up convs with nearest-neighbor upsampling."""
    rng = np.random.default_rng(seed)
    b2, b4 = base * 2, base * 4
    stages = [
        # encoder: 150 -> 75 -> 38 -> 19 on the strided stages
        Stage(Conv2d(4, base, stride=1, rng=rng, dtype=dtype), ReLU()),
        Stage(Conv2d(base, base, stride=2, rng=rng, dtype=dtype), ReLU()),
        Stage(Conv2d(base, b2, stride=1, rng=rng, dtype=dtype), ReLU()),
        Stage(Conv2d(b2, b2, stride=2, rng=rng, dtype=dtype), ReLU()),
        Stage(Conv2d(b2, b4, stride=1, rng=rng, dtype=dtype), ReLU()),
        Stage(Conv2d(b4, b4, stride=2, rng=rng, dtype=dtype), ReLU()),
        # bottleneck (64 x 19 x 19 at the canonical width and resolution)
        Stage(Conv2d(b4, b4, stride=1, rng=rng, dtype=dtype), ReLU()),
        # decoder
        Stage(Conv2d(b4, b2, stride=1, rng=rng, dtype=dtype), ReLU(), upsample_before=True),
        Stage(Conv2d(b2, b2, stride=1, rng=rng, dtype=dtype), ReLU()),
        Stage(Conv2d(b2, base, stride=1, rng=rng, dtype=dtype), ReLU(), upsample_before=True),
        Stage(Conv2d(base, base, stride=1, rng=rng, dtype=dtype), ReLU()),
        Stage(Conv2d(base, base // 2, stride=1, rng=rng, dtype=dtype), ReLU(), upsample_before=True),
        Stage(Conv2d(base // 2, 2, stride=1, rng=rng, dtype=dtype), None),
    ]
    return ConvNet(ARCH_CONTINUOUS, stages)


def bottleneck_activation_shape(net: ConvNet, side: int) -> tuple[int, int, int]:
    """Channels x side x side of the last encoder-half activation."""
    bottleneck_idx = next(
        i for i, s in enumerate(net.stages) if s.upsample_before
    ) - 1
    current = side
    for stage in net.stages[: bottleneck_idx + 1]:
        current = stage.conv.out_side(current)
    return (net.stages[bottleneck_idx].conv.out_channels, current, current)


# -- checkpoint io ----------------------------------------------------------


def save_checkpoint(net: ConvNet) -> bytes:
    """Self-describing binary: magic, arch tag, stage metadata, f32 LE arrays."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    tag = net.arch.encode()
    buf.write(struct.pack("<B", len(tag)))
    buf.write(tag)
    buf.write(struct.pack("<H", len(net.stages)))
    for stage in net.stages:
        conv = stage.conv
        buf.write(
            struct.pack(
                "<HHBBBB",
                conv.in_channels,
                conv.out_channels,
                conv.kernel,
                conv.stride,
                1 if stage.relu is not None else 0,
                1 if stage.upsample_before else 0,
            )
        )
    for _, value, _ in net.parameters():
        buf.write(value.astype("<f4").tobytes())
    return buf.getvalue()


def load_checkpoint(data: bytes, dtype=np.float64) -> ConvNet:
    buf = io.BytesIO(data)
    if buf.read(len(MAGIC)) != MAGIC:
        raise ValueError("not a network checkpoint (bad magic)")
    (tag_len,) = struct.unpack("<B", buf.read(1))
    arch = buf.read(tag_len).decode()
    if arch not in (ARCH_DISCRETE, ARCH_CONTINUOUS):
        raise ValueError(f"unknown architecture tag {arch!r}")
    (n_stages,) = struct.unpack("<H", buf.read(2))
    stages = []
    for _ in range(n_stages):
        in_ch, out_ch, kernel, stride, has_relu, up = struct.unpack(
            "<HHBBBB", buf.read(8)
        )
        conv = Conv2d(in_ch, out_ch, stride=stride, kernel=kernel, dtype=dtype)
        stages.append(Stage(conv, ReLU() if has_relu else None, bool(up)))
    net = ConvNet(arch, stages)
    for name, value, _ in net.parameters():
        raw = buf.read(value.size * 4)
        if len(raw) != value.size * 4:
            raise ValueError(f"checkpoint truncated at {name}")
        value[...] = np.frombuffer(raw, dtype="<f4").reshape(value.shape)
    if buf.read(1):
        raise ValueError("trailing bytes after checkpoint payload")
    return net
