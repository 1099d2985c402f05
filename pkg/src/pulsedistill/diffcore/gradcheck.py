"""Central finite-difference oracle for checking reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numerical_grad(fn: Callable[[], Tensor], param: Tensor, h: float = 1e-5, indices=None) -> np.ndarray:
    """``(f(p+h) - f(p-h)) / 2h`` per coordinate; ``fn`` re-evaluates the scalar loss."""
    grad = np.full(param.shape, np.nan)
    flat = param.data.reshape(-1)
    coords = range(flat.size) if indices is None else indices
    for i in coords:
        original = flat[i]
        flat[i] = original + h
        up = fn().item()
        flat[i] = original - h
        down = fn().item()
        flat[i] = original
        grad.reshape(-1)[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-3) -> np.ndarray:
    # floor turns the test into an absolute one for near-zero components
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def check_gradients(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    probes: int | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[float, int]:
    """Compare backward() against central differences.

    Returns ``(max_relative_error, n_probes)``. With ``probes`` set, that many
    coordinates are sampled per parameter instead of checking every one.
    """
    for p in params:
        p.grad = None
    fn().backward()
    analytic = [np.zeros(p.shape) if p.grad is None else p.grad.copy() for p in params]
    worst, count = 0.0, 0
    rng = rng or np.random.default_rng(0)
    for p, a in zip(params, analytic):
        if probes is None or probes >= p.size:
            idx = np.arange(p.size)
        else:
            idx = rng.choice(p.size, size=probes, replace=False)
        num = numerical_grad(fn, p, h, idx)
        err = relative_error(a.reshape(-1)[idx], num.reshape(-1)[idx])
        worst = max(worst, float(err.max()))
        count += len(idx)
    return worst, count
