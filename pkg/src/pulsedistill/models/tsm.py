"""Temporal shift blocks for frame-batched 2D features ``(T, C, H, W)``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diffcore import Module, Tensor, adaptive_avg_pool, as_tensor, custom_op, norm_layer
from ..errors import ParameterError
from .layers import ConvTranspose

VARIANTS = ("TSM1", "TSM2", "TSM3")


@dataclass(frozen=True)
class TsmConfig:
    variant: str = "TSM1"
    fold_div: int = 3
    pool_out: tuple[int, int] | None = None
    deconv_kernel: tuple[int, int, int] = (3, 3, 3)
    deconv_padding: tuple[int, int, int] = (1, 1, 1)
    norm_eps: float = 1e-5

    def __post_init__(self):
        variant = normalize_variant(self.variant)
        object.__setattr__(self, "variant", variant)
        if self.fold_div < 1:
            raise ParameterError("fold_div must be positive")


def normalize_variant(v) -> str:
    name = f"TSM{v}" if isinstance(v, int) or str(v).isdigit() else str(v).upper()
    if name not in VARIANTS:
        raise ParameterError(f"unknown TSM variant {v!r}; expected one of {VARIANTS}")
    return name


def channel_groups(channels: int, fold_div: int = 3) -> tuple[int, int, int]:
    """Sizes of the (advance, delay, static) channel groups."""
    if channels < fold_div:
        raise ParameterError(f"{channels} channels cannot be split {fold_div} ways")
    fold = channels // fold_div
    return fold, fold, channels - 2 * fold


def temporal_shift(x, fold_div: int = 3) -> Tensor:
    """Group 1 reads the next frame, group 2 the previous one, group 3 stays.

    Frames shifted in from outside the clip are zeros. No parameters.
    """
    x = as_tensor(x)
    if x.ndim < 2:
        raise ParameterError("temporal_shift expects (T, C, ...)")
    t = x.shape[0]
    if t < 2:
        raise ParameterError(f"temporal shift needs at least 2 frames, got {t}")
    f1, f2, _ = channel_groups(x.shape[1], fold_div)
    a, b = f1, f1 + f2
    xd = x.data
    out = np.zeros_like(xd)
    out[:-1, :a] = xd[1:, :a]
    out[1:, a:b] = xd[:-1, a:b]
    out[:, b:] = xd[:, b:]

    def vjp(g):
        gx = np.zeros_like(g)
        gx[1:, :a] = g[:-1, :a]
        gx[:-1, a:b] = g[1:, a:b]
        gx[:, b:] = g[:, b:]
        return (gx,)

    return custom_op(out, (x,), vjp, "temporal_shift")


def _to_volume(x: Tensor) -> Tensor:
    t, c, h, w = x.shape
    return x.transpose(1, 0, 2, 3).reshape(1, c, t, h, w)


def _from_volume(v: Tensor) -> Tensor:
    _, c, t, h, w = v.shape
    return v.reshape(c, t, h, w).transpose(1, 0, 2, 3)


class TemporalShift(Module):
    """TSM1 shift, TSM2 pool-then-shift, or TSM3 deconv+norm-then-shift."""

    def __init__(self, cfg: TsmConfig, channels: int, pool_out=None, rng=None):
        self.cfg = cfg
        self.channels = channels
        self.pool_out = tuple(pool_out) if pool_out is not None else cfg.pool_out
        channel_groups(channels, cfg.fold_div)
        if cfg.variant == "TSM3":
            self.deconv = ConvTranspose(
                3, channels, channels, cfg.deconv_kernel, 1, cfg.deconv_padding, rng=rng
            )
            self.norm_scale = Tensor(np.ones(channels), requires_grad=True)
            self.norm_shift = Tensor(np.zeros(channels), requires_grad=True)

    def prepare(self, x: Tensor) -> Tensor:
        """The variant-specific transform applied before the shift."""
        if self.cfg.variant == "TSM2":
            target = self.pool_out or x.shape[2:]
            return x if tuple(target) == x.shape[2:] else adaptive_avg_pool(x, target)
        if self.cfg.variant == "TSM3":
            v = self.deconv(_to_volume(x))
            v = norm_layer(v, "batch", self.norm_scale, self.norm_shift, self.cfg.norm_eps)
            return _from_volume(v)
        return x

    def __call__(self, x) -> Tensor:
        return temporal_shift(self.prepare(as_tensor(x)), self.cfg.fold_div)
