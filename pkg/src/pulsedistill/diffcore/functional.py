"""Convolution, pooling and normalization on ``(N, C, *spatial)`` tensors."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError, ParameterError
from .tensor import Tensor, as_tensor, custom_op


def _ntuple(value, n: int) -> tuple[int, ...]:
    if isinstance(value, (int, np.integer)):
        return (int(value),) * n
    value = tuple(int(v) for v in value)
    if len(value) != n:
        raise ParameterError(f"expected {n} values, got {value}")
    return value


def _check_dims(dims, x: Tensor, w: Tensor) -> int:
    nd = {"2D": 2, "3D": 3, 2: 2, 3: 3}.get(dims)
    if nd is None:
        raise ParameterError(f"dims must be 2D or 3D, got {dims!r}")
    if x.ndim != nd + 2 or w.ndim != nd + 2:
        raise DimensionError(
            f"{nd}D conv expects rank-{nd + 2} input and weight, got {x.shape} and {w.shape}"
        )
    return nd


def _windows(xp: np.ndarray, ksize: Sequence[int], stride: Sequence[int]) -> np.ndarray:
    nd = len(ksize)
    win = sliding_window_view(xp, tuple(ksize), axis=tuple(range(2, 2 + nd)))
    return win[(slice(None), slice(None)) + tuple(slice(None, None, s) for s in stride)]


def _pad(x: np.ndarray, padding: Sequence[int]) -> np.ndarray:
    if not any(padding):
        return x
    return np.pad(x, [(0, 0), (0, 0)] + [(p, p) for p in padding])


def _conv_forward(x, w, stride, padding):
    nd = w.ndim - 2
    win = _windows(_pad(x, padding), w.shape[2:], stride)
    k_axes = list(range(2 + nd, 2 + 2 * nd))
    out = np.tensordot(win, w, axes=([1] + k_axes, [1] + list(range(2, 2 + nd))))
    return np.moveaxis(out, -1, 1)


def _conv_grad_input(g, w, stride, padding, in_spatial):
    """Adjoint of :func:`_conv_forward` with respect to its input."""
    nd = w.ndim - 2
    n, out_spatial = g.shape[0], g.shape[2:]
    cols = np.tensordot(g, w, axes=([1], [0]))  # (N, *out, C, *K)
    padded = tuple(i + 2 * p for i, p in zip(in_spatial, padding))
    dxp = np.zeros((n, w.shape[1]) + padded)
    lead = (slice(None),) * (1 + nd + 1)
    for koff in np.ndindex(*w.shape[2:]):
        target = (slice(None), slice(None)) + tuple(
            slice(k, k + s * (o - 1) + 1, s) for k, s, o in zip(koff, stride, out_spatial)
        )
        dxp[target] += np.moveaxis(cols[lead + koff], -1, 1)
    crop = (slice(None), slice(None)) + tuple(slice(p, p + i) for p, i in zip(padding, in_spatial))
    return dxp[crop]


def _conv_grad_weight(g, x, kshape, stride, padding):
    nd = len(kshape)
    win = _windows(_pad(x, padding), kshape, stride)
    axes = [0] + list(range(2, 2 + nd))
    return np.tensordot(g, win, axes=(axes, axes))


def _bias_view(b: Tensor, nd: int) -> Tensor:
    return b.reshape((1, b.shape[0]) + (1,) * nd)


def conv(x, w, b=None, dims="2D", stride=1, padding=0) -> Tensor:
    """Cross-correlation of ``x (N, C, *S)`` with ``w (O, C, *K)`` plus bias ``b (O,)``."""
    x, w = as_tensor(x), as_tensor(w)
    nd = _check_dims(dims, x, w)
    stride, padding = _ntuple(stride, nd), _ntuple(padding, nd)
    if any(s < 1 for s in stride) or any(p < 0 for p in padding):
        raise ParameterError("stride must be >= 1 and padding >= 0")
    if x.shape[1] != w.shape[1]:
        raise DimensionError(f"input has {x.shape[1]} channels, kernel expects {w.shape[1]}")
    in_spatial = x.shape[2:]
    ksize = w.shape[2:]
    for i, k, p in zip(in_spatial, ksize, padding):
        if k > i + 2 * p:
            raise DimensionError(f"kernel {ksize} larger than padded input {in_spatial}")
    xd, wd = x.data, w.data
    out = _conv_forward(xd, wd, stride, padding)

    def vjp(g):
        return (
            _conv_grad_input(g, wd, stride, padding, in_spatial) if x.requires_grad else None,
            _conv_grad_weight(g, xd, ksize, stride, padding) if w.requires_grad else None,
        )

    y = custom_op(out, (x, w), vjp, "conv")
    if b is not None:
        y = y + _bias_view(as_tensor(b), nd)
    return y


def transpose_conv(x, w, dims="2D", stride=1, padding=0) -> Tensor:
    """Adjoint of :func:`conv` for the same ``w``: maps ``(N, O, *S)`` to ``(N, C, *S')``.

    ``S' = (S - 1) * stride - 2 * padding + K``.
    """
    x, w = as_tensor(x), as_tensor(w)
    nd = _check_dims(dims, x, w)
    stride, padding = _ntuple(stride, nd), _ntuple(padding, nd)
    if any(s < 1 for s in stride) or any(p < 0 for p in padding):
        raise ParameterError("stride must be >= 1 and padding >= 0")
    if x.shape[1] != w.shape[0]:
        raise DimensionError(f"input has {x.shape[1]} channels, kernel expects {w.shape[0]}")
    ksize = w.shape[2:]
    out_spatial = tuple((i - 1) * s - 2 * p + k for i, s, p, k in zip(x.shape[2:], stride, padding, ksize))
    if any(o < 1 for o in out_spatial):
        raise DimensionError(f"transpose_conv output would be empty: {out_spatial}")
    xd, wd = x.data, w.data
    out = _conv_grad_input(xd, wd, stride, padding, out_spatial)

    def vjp(g):
        return (
            _conv_forward(g, wd, stride, padding) if x.requires_grad else None,
            _conv_grad_weight(xd, g, ksize, stride, padding) if w.requires_grad else None,
        )

    return custom_op(out, (x, w), vjp, "transpose_conv")


def _pool_matrix(n_in: int, n_out: int) -> np.ndarray:
    m = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo = (i * n_in) // n_out
        hi = -((-(i + 1) * n_in) // n_out)
        m[i, lo:hi] = 1.0 / (hi - lo)
    return m


def adaptive_avg_pool(x, out_spatial) -> Tensor:
    """Average-pool the trailing ``len(out_spatial)`` axes to the requested sizes.

    Windows follow the usual adaptive rule ``[floor(i*I/O), ceil((i+1)*I/O))``,
    which is an exact even partition whenever ``O`` divides ``I``.
    """
    x = as_tensor(x)
    if isinstance(out_spatial, (int, np.integer)):
        out_spatial = (int(out_spatial),)
    out_spatial = tuple(int(o) for o in out_spatial)
    nd = len(out_spatial)
    if nd > x.ndim:
        raise DimensionError(f"cannot pool {nd} axes of a rank-{x.ndim} tensor")
    first = x.ndim - nd
    in_spatial = x.shape[first:]
    for i, o in zip(in_spatial, out_spatial):
        if o < 1:
            raise DimensionError("adaptive_avg_pool output dims must be >= 1")
        if o > i:
            raise DimensionError(f"output {out_spatial} larger than input {in_spatial}")
    mats = [_pool_matrix(i, o) for i, o in zip(in_spatial, out_spatial)]

    def apply(arr, matrices):
        for d, m in enumerate(matrices):
            ax = first + d
            if m.shape[0] == m.shape[1]:
                continue
            arr = np.moveaxis(np.tensordot(arr, m, axes=([ax], [1])), -1, ax)
        return arr

    out = apply(x.data, mats)
    return custom_op(out, (x,), lambda g: (apply(g, [m.T for m in mats]),), "adaptive_avg_pool")


def norm_layer(x, kind: str = "instance", scale=None, shift=None, eps: float = 1e-5) -> Tensor:
    """Per-channel standardization of ``x (N, C, *S)`` followed by ``scale * x + shift``.

    ``batch`` pools statistics over N and the spatial axes, ``instance`` over
    the spatial axes of each sample separately.
    """
    if eps <= 0:
        raise ParameterError("eps must be positive")
    x = as_tensor(x)
    if x.ndim < 3:
        raise DimensionError("norm_layer expects (N, C, *spatial)")
    spatial = tuple(range(2, x.ndim))
    if kind == "batch":
        axes = (0,) + spatial
    elif kind == "instance":
        axes = spatial
    else:
        raise ParameterError(f"unknown norm kind {kind!r}")
    mu = x.mean(axis=axes, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=axes, keepdims=True)
    y = centered * (var + eps) ** -0.5
    view = (1, x.shape[1]) + (1,) * len(spatial)
    if scale is not None:
        y = y * as_tensor(scale).reshape(view)
    if shift is not None:
        y = y + as_tensor(shift).reshape(view)
    return y
