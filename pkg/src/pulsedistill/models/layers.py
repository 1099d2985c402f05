from __future__ import annotations

import numpy as np

from ..diffcore import Module, Tensor, conv, transpose_conv, uniform_init
from ..diffcore.functional import _ntuple


class Conv(Module):
    def __init__(self, dims: int, cin: int, cout: int, kernel, stride=1, padding=0, rng=None):
        self.dims, self.stride, self.padding = dims, stride, padding
        k = _ntuple(kernel, dims)
        fan_in = cin * int(np.prod(k))
        self.weight = uniform_init(rng, (cout, cin) + k, fan_in)
        self.bias = uniform_init(rng, (cout,), fan_in)

    def __call__(self, x: Tensor) -> Tensor:
        return conv(x, self.weight, self.bias, self.dims, self.stride, self.padding)


class ConvTranspose(Module):
    def __init__(self, dims: int, cin: int, cout: int, kernel, stride=1, padding=0, rng=None):
        self.dims, self.stride, self.padding = dims, stride, padding
        k = _ntuple(kernel, dims)
        fan_in = cin * int(np.prod(k))
        self.weight = uniform_init(rng, (cin, cout) + k, fan_in)
        self.bias = uniform_init(rng, (cout,), fan_in)

    def __call__(self, x: Tensor) -> Tensor:
        y = transpose_conv(x, self.weight, self.dims, self.stride, self.padding)
        return y + self.bias.reshape((1, -1) + (1,) * self.dims)


class Dense(Module):
    def __init__(self, n_in: int, n_out: int, rng=None):
        self.weight = uniform_init(rng, (n_in, n_out), n_in)
        self.bias = uniform_init(rng, (n_out,), n_in)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class AttentionMask(Module):
    """Sigmoid spatial mask from a 1x1 convolution, rescaled to mean 1 per frame.

    Works on student ``(T, C, H, W)`` and teacher ``(N, C, T, H, W)`` layouts;
    the last two axes are the spatial ones in both.
    """

    def __init__(self, dims: int, channels: int, rng=None):
        self.dims = dims
        self.proj = Conv(dims, channels, 1, 1, rng=rng)

    def mask(self, x: Tensor) -> Tensor:
        gate = self.proj(x).sigmoid()
        return gate / gate.mean(axis=(-2, -1), keepdims=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x * self.mask(x)
