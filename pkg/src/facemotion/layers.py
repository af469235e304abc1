"""Differentiable building blocks assembled from the autodiff primitives.

All layers operate on (T, C) tensors where T is time. Weights initialize
from a fan-in scaled uniform distribution using a caller-supplied
numpy Generator, so construction order plus seed fixes every parameter.
"""

from __future__ import annotations

import numpy as np

from .autodiff import (
    Tensor,
    add,
    conv1d,
    conv1d_forward,
    div,
    leaky_relu,
    matmul,
    mean_,
    mul,
    sqrt,
    sub,
)

LEAKY_SLOPE = 0.2


class Module:
    """Base class: named parameters/buffers, train/eval and freeze flags."""

    def __init__(self):
        self.training = True
        self.frozen = False

    def children(self):
        return []  # list of (name, Module)

    def local_parameters(self):
        return []  # list of (name, Tensor)

    def local_buffers(self):
        return []  # list of attribute names holding ndarrays

    def parameters(self):
        """All (qualified_name, Tensor) pairs in deterministic order."""
        out = list(self.local_parameters())
        for child_name, child in self.children():
            out.extend((f"{child_name}.{n}", p) for n, p in child.parameters())
        return out

    def buffers(self):
        """All (qualified_name, owner_module, attribute) triples."""
        out = [(name, self, name) for name in self.local_buffers()]
        for child_name, child in self.children():
            out.extend((f"{child_name}.{n}", m, a) for n, m, a in child.buffers())
        return out

    def train(self, flag: bool = True):
        if self.training == flag:
            return self
        self.training = flag
        for _, child in self.children():
            child.train(flag)
        return self

    def eval(self):
        return self.train(False)

    def freeze(self, flag: bool = True):
        """Frozen modules take no parameter updates and no buffer updates."""
        self.frozen = flag
        for _, child in self.children():
            child.freeze(flag)
        return self


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def leaky_raw(x: np.ndarray, slope: float = LEAKY_SLOPE) -> np.ndarray:
    """Raw-array counterpart of leaky_relu (same expression, bitwise)."""
    return x * np.where(x > 0, 1.0, slope)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        super().__init__()
        self.weight = Tensor(_uniform(rng, in_dim, (in_dim, out_dim)), requires_grad=True)
        self.bias = Tensor(_uniform(rng, in_dim, (out_dim,)), requires_grad=True)

    def local_parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.weight), self.bias)

    def infer(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weight.data + self.bias.data


class Conv1d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int = 3,
        stride: int = 1,
        rng: np.random.Generator | None = None,
    ):
        super().__init__()
        fan_in = in_channels * kernel
        self.stride = stride
        self.kernel = kernel
        self.weight = Tensor(
            _uniform(rng, fan_in, (out_channels, in_channels, kernel)), requires_grad=True
        )
        self.bias = Tensor(_uniform(rng, fan_in, (out_channels,)), requires_grad=True)

    def local_parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d(x, self.weight, self.bias, stride=self.stride)

    def infer(self, x: np.ndarray) -> np.ndarray:
        return conv1d_forward(x, self.weight.data, self.bias.data, self.stride)[0]


class TemporalNorm(Module):
    """Per-channel running-statistic normalization over time.

    The forward map is always the same per-frame affine transform built
    from the running statistics, so training optimizes exactly the
    function inference applies and stride-1 stacks stay shift-equivariant
    in every mode. Training folds the current sequence's temporal mean
    and population variance into the buffers first (EMA, skipped when
    frozen); eval never touches them. begin_calibration() switches the
    update to an equal-weight average for re-estimation passes.
    """

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.gain = Tensor(np.ones(channels), requires_grad=True)
        self.shift = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self._calibration_count = None

    def local_parameters(self):
        return [("gain", self.gain), ("shift", self.shift)]

    def local_buffers(self):
        return ["running_mean", "running_var"]

    def begin_calibration(self):
        """Make following training-mode calls average stats with equal weight."""
        self._calibration_count = 0

    def end_calibration(self):
        self._calibration_count = None

    def _update_buffers(self, x: np.ndarray) -> None:
        if self._calibration_count is None:
            w = self.momentum
        else:
            self._calibration_count += 1
            w = 1.0 / self._calibration_count
        self.running_mean = (1 - w) * self.running_mean + w * x.mean(axis=0)
        self.running_var = (1 - w) * self.running_var + w * x.var(axis=0)

    def __call__(self, x: Tensor) -> Tensor:
        if self.training and not self.frozen:
            self._update_buffers(x.data)
        normed = div(
            sub(x, self.running_mean[None, :]),
            np.sqrt(self.running_var + self.eps)[None, :],
        )
        return add(mul(normed, self.gain), self.shift)

    def infer(self, x: np.ndarray) -> np.ndarray:
        """The same affine map on a raw array; never updates buffers."""
        normed = (x - self.running_mean[None, :]) / np.sqrt(self.running_var + self.eps)[None, :]
        return normed * self.gain.data + self.shift.data


class ConvUnit(Module):
    """conv -> temporal norm -> leaky activation, stride 1."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        kernel: int = 3,
        slope: float = LEAKY_SLOPE,
    ):
        super().__init__()
        self.slope = slope
        self.conv = Conv1d(in_channels, out_channels, kernel, 1, rng)
        self.norm = TemporalNorm(out_channels)

    def children(self):
        return [("conv", self.conv), ("norm", self.norm)]

    def conv_kernels(self):
        return [self.conv.kernel]

    def __call__(self, x: Tensor) -> Tensor:
        return leaky_relu(self.norm(self.conv(x)), self.slope)

    def infer(self, x: np.ndarray) -> np.ndarray:
        return leaky_raw(self.norm.infer(self.conv.infer(x)), self.slope)


class ResBlock1d(Module):
    """conv-norm-act, conv-norm, additive shortcut, final activation.

    The shortcut is the identity when shape allows, otherwise a bare
    strided 1x1 convolution. Normalization sits only on the convolution
    path, so the shortcut carries input scale through the block. With
    both main convolutions zeroed and an identity shortcut this block
    reduces to activation(x).
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        kernel: int = 3,
        stride: int = 1,
        slope: float = LEAKY_SLOPE,
    ):
        super().__init__()
        self.slope = slope
        self.conv1 = Conv1d(in_channels, out_channels, kernel, stride, rng)
        self.norm1 = TemporalNorm(out_channels)
        self.conv2 = Conv1d(out_channels, out_channels, kernel, 1, rng)
        self.norm2 = TemporalNorm(out_channels)
        if in_channels == out_channels and stride == 1:
            self.proj = None
        else:
            self.proj = Conv1d(in_channels, out_channels, 1, stride, rng)

    def children(self):
        named = [
            ("conv1", self.conv1),
            ("norm1", self.norm1),
            ("conv2", self.conv2),
            ("norm2", self.norm2),
        ]
        if self.proj is not None:
            named += [("proj", self.proj)]
        return named

    def conv_kernels(self):
        """Kernel sizes of the main path, for receptive-field arithmetic."""
        return [self.conv1.kernel, self.conv2.kernel]

    def __call__(self, x: Tensor) -> Tensor:
        h = leaky_relu(self.norm1(self.conv1(x)), self.slope)
        h = self.norm2(self.conv2(h))
        shortcut = x if self.proj is None else self.proj(x)
        return leaky_relu(add(h, shortcut), self.slope)

    def infer(self, x: np.ndarray) -> np.ndarray:
        h = leaky_raw(self.norm1.infer(self.conv1.infer(x)), self.slope)
        h = self.norm2.infer(self.conv2.infer(h))
        shortcut = x if self.proj is None else self.proj.infer(x)
        return leaky_raw(h + shortcut, self.slope)


class Stack(Module):
    """A plain sequential container."""

    def __init__(self, blocks):
        super().__init__()
        self.blocks = list(blocks)

    def children(self):
        return [(str(i), b) for i, b in enumerate(self.blocks)]

    def __call__(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = block(x)
        return x

    def infer(self, x: np.ndarray) -> np.ndarray:
        for block in self.blocks:
            x = block.infer(x)
        return x


def adain(z: Tensor, target_mean, target_std, eps: float = 1e-5) -> Tensor:
    """Replace the per-channel temporal statistics of z with target ones.

    Computes target_std * (z - mean(z)) / (std(z) + eps) + target_mean,
    where mean/std are per-channel over time and std is the population
    convention. The output's per-channel mean equals target_mean exactly
    and its std equals target_std * std / (std + eps).
    """
    center = mean_(z, axis=0, keepdims=True)
    delta = sub(z, center)
    std = sqrt(mean_(mul(delta, delta), axis=0, keepdims=True))
    scaled = div(delta, add(std, eps))
    return add(mul(scaled, target_std), target_mean)


def temporal_stats(z: Tensor) -> tuple[Tensor, Tensor]:
    """Per-channel (mean, population std) over time as (1, C) tensors."""
    center = mean_(z, axis=0, keepdims=True)
    delta = sub(z, center)
    std = sqrt(mean_(mul(delta, delta), axis=0, keepdims=True))
    return center, std


def temporal_stats_raw(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Raw-array temporal_stats with the identical operation order."""
    inv = 1.0 / z.shape[0]
    center = z.sum(axis=0, keepdims=True) * inv
    delta = z - center
    std = np.sqrt((delta * delta).sum(axis=0, keepdims=True) * inv)
    return center, std


def adain_raw(z: np.ndarray, target_mean, target_std, eps: float = 1e-5) -> np.ndarray:
    """Raw-array adain with the identical operation order (bitwise match)."""
    inv = 1.0 / z.shape[0]
    center = z.sum(axis=0, keepdims=True) * inv
    delta = z - center
    std = np.sqrt((delta * delta).sum(axis=0, keepdims=True) * inv)
    scaled = delta / (std + eps)
    return scaled * target_std + target_mean
