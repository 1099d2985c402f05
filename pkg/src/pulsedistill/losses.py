"""DILATE loss: soft-DTW shape term plus a Gibbs-smoothed temporal term.

The soft-DTW value comes from the usual dynamic-programming recurrence.
The temporal term is ``<E, Omega>`` where ``E = d softDTW / d Delta`` is the
expected alignment under the Gibbs distribution over warping paths; ``E`` is
obtained by running the recurrence backwards. Its own gradient is the
Hessian-vector product ``H Omega``, computed by pushing a forward-mode
tangent through both passes. Nothing here enumerates paths except the
explicit test oracles at the bottom of the module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .diffcore import Tensor, as_tensor, custom_op
from .errors import DimensionError, ParameterError

DEFAULT_GAMMA = 0.01
DEFAULT_ALPHA = 0.5


def omega_matrix(k: int) -> np.ndarray:
    idx = np.arange(k, dtype=np.float64)
    return (idx[:, None] - idx[None, :]) ** 2 / float(k * k)


def _as_sequence(x) -> Tensor:
    if isinstance(x, Tensor):
        t = x
    else:
        t = Tensor(getattr(x, "samples", x))
    if t.ndim != 1:
        t = t.reshape(-1)
    return t


def znormalize(x: Tensor) -> Tensor:
    centered = x - x.mean()
    return centered * ((centered * centered).mean() + 1e-12) ** -0.5


@dataclass
class AlignmentCost:
    """Pairwise cost ``delta[h, j] = (pred_h - truth_j)^2`` with the temporal penalty."""

    delta: Tensor
    omega: np.ndarray
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ParameterError(f"gamma must be positive, got {self.gamma}")
        k = self.delta.shape[0]
        if self.delta.shape != (k, k) or self.omega.shape != (k, k):
            raise DimensionError("delta and omega must both be k x k")

    @property
    def k(self) -> int:
        return self.delta.shape[0]

    @cached_property
    def dp(self) -> "SoftDTWPass":
        return SoftDTWPass(self.delta.data, self.gamma)


def cost_matrix(pred, truth, gamma: float = DEFAULT_GAMMA) -> AlignmentCost:
    p, t = _as_sequence(pred), _as_sequence(truth)
    if p.shape != t.shape:
        raise ParameterError(f"length mismatch: {p.shape[0]} vs {t.shape[0]}")
    k = p.shape[0]
    if k < 2:
        raise ParameterError("sequences need at least 2 samples")
    diff = p.reshape(k, 1) - t.reshape(1, k)
    return AlignmentCost(diff * diff, omega_matrix(k), float(gamma))


class SoftDTWPass:
    """Forward recurrence over anti-diagonals, with cached predecessor weights.

    Arrays are padded to ``(k+2, k+2)`` and use 1-based cell indices so the
    boundary conditions need no special cases. ``w_diag[i, j]`` is the
    softmin weight that cell ``(i, j)`` puts on ``(i-1, j-1)``; likewise
    ``w_up`` for ``(i-1, j)`` and ``w_left`` for ``(i, j-1)``.
    """

    def __init__(self, delta: np.ndarray, gamma: float):
        k = delta.shape[0]
        self.k, self.gamma = k, gamma
        r = np.full((k + 2, k + 2), np.inf)
        r[0, 0] = 0.0
        w_diag = np.zeros((k + 2, k + 2))
        w_up = np.zeros((k + 2, k + 2))
        w_left = np.zeros((k + 2, k + 2))
        self.diagonals = []
        for d in range(2, 2 * k + 1):
            i = np.arange(max(1, d - k), min(k, d - 1) + 1)
            j = d - i
            self.diagonals.append((i, j))
            prev = np.stack((r[i - 1, j - 1], r[i - 1, j], r[i, j - 1]))
            low = prev.min(axis=0)
            with np.errstate(invalid="ignore"):
                e = np.exp(-(prev - low) / gamma)
            total = e.sum(axis=0)
            r[i, j] = delta[i - 1, j - 1] + low - gamma * np.log(total)
            w_diag[i, j], w_up[i, j], w_left[i, j] = e / total
        self.r = r
        self.w_diag, self.w_up, self.w_left = w_diag, w_up, w_left

    @property
    def value(self) -> float:
        return float(self.r[self.k, self.k])

    @cached_property
    def expected_alignment(self) -> np.ndarray:
        """``E = d value / d delta`` (Gibbs expectation of the path matrix)."""
        k = self.k
        e = np.zeros((k + 2, k + 2))
        e[k, k] = 1.0
        wd, wu, wl = self.w_diag, self.w_up, self.w_left
        for i, j in reversed(self.diagonals[:-1]):
            e[i, j] = e[i + 1, j] * wu[i + 1, j] + e[i, j + 1] * wl[i, j + 1] + e[i + 1, j + 1] * wd[i + 1, j + 1]
        return e[1 : k + 1, 1 : k + 1]

    def hessian_product(self, direction: np.ndarray) -> np.ndarray:
        """Directional derivative of :attr:`expected_alignment` along ``direction``.

        Because the Hessian is symmetric this is also the gradient of
        ``<E, direction>`` with respect to ``delta``.
        """
        k, gamma = self.k, self.gamma
        z = np.zeros((k + 2, k + 2))
        z[1 : k + 1, 1 : k + 1] = direction
        wd, wu, wl = self.w_diag, self.w_up, self.w_left
        rdot = np.zeros((k + 2, k + 2))
        for i, j in self.diagonals:
            rdot[i, j] = z[i, j] + wd[i, j] * rdot[i - 1, j - 1] + wu[i, j] * rdot[i - 1, j] + wl[i, j] * rdot[i, j - 1]
        # tangent of each cell's softmin value
        sdot = rdot - z
        e = np.zeros((k + 2, k + 2))
        e[1 : k + 1, 1 : k + 1] = self.expected_alignment
        edot = np.zeros((k + 2, k + 2))
        for i, j in reversed(self.diagonals[:-1]):
            acc = np.zeros(i.shape)
            for si, sj, w in ((i + 1, j, wu), (i, j + 1, wl), (i + 1, j + 1, wd)):
                ws = w[si, sj]
                wdot = ws * (sdot[si, sj] - rdot[i, j]) / gamma
                acc += edot[si, sj] * ws + e[si, sj] * wdot
            edot[i, j] = acc
        return edot[1 : k + 1, 1 : k + 1]


def soft_dtw(cost: AlignmentCost) -> Tensor:
    """``-gamma * log sum_A exp(-<A, delta>/gamma)`` via the DP recurrence."""
    dp = cost.dp
    return custom_op(
        np.array(dp.value), (cost.delta,), lambda g: (g * dp.expected_alignment,), "soft_dtw"
    )


def temporal_term(cost: AlignmentCost) -> Tensor:
    """``<E_Gibbs[A], Omega>``, differentiable through the Hessian-vector product."""
    dp = cost.dp
    value = float(np.sum(dp.expected_alignment * cost.omega))
    return custom_op(
        np.array(value), (cost.delta,), lambda g: (g * dp.hessian_product(cost.omega),), "temporal"
    )


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError(f"alpha must lie in [0, 1], got {alpha}")


def dilate_terms(pred, truth, gamma: float = DEFAULT_GAMMA, normalize: bool = False) -> tuple[Tensor, Tensor]:
    """Return ``(shape_term, temporal_term)`` sharing one DP pass."""
    p, t = _as_sequence(pred), _as_sequence(truth)
    if normalize:
        p, t = znormalize(p), znormalize(t)
    cost = cost_matrix(p, t, gamma)
    return soft_dtw(cost), temporal_term(cost)


def dilate(pred, truth, alpha: float = DEFAULT_ALPHA, gamma: float = DEFAULT_GAMMA, normalize: bool = False) -> Tensor:
    """``alpha * shape + (1 - alpha) * temporal``.

    ``normalize`` z-scores both sequences first; it is off by default so the
    caller decides whether inputs are already standardized.
    """
    _check_alpha(alpha)
    shape, temporal = dilate_terms(pred, truth, gamma, normalize)
    if alpha == 1.0:
        return shape
    if alpha == 0.0:
        return temporal
    return alpha * shape + (1.0 - alpha) * temporal


def mse(pred, truth) -> Tensor:
    p, t = _as_sequence(pred), _as_sequence(as_tensor(getattr(truth, "samples", truth)))
    if p.shape != t.shape:
        raise ParameterError(f"length mismatch: {p.shape} vs {t.shape}")
    d = p - t
    return (d * d).mean()


# -- test oracles ------------------------------------------------------------
@dataclass(frozen=True)
class WarpPathSet:
    paths: tuple[np.ndarray, ...]

    def __len__(self) -> int:
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)

    def stacked(self) -> np.ndarray:
        return np.stack(self.paths)


def is_valid_path(a: np.ndarray) -> bool:
    """Monotone, contiguous, from the top-left to the bottom-right cell."""
    k = a.shape[0]
    if a.shape != (k, k) or not np.isin(a, (0, 1)).all():
        return False
    cells = sorted(zip(*np.nonzero(a)))
    if not cells or cells[0] != (0, 0) or cells[-1] != (k - 1, k - 1):
        return False
    for (i0, j0), (i1, j1) in zip(cells, cells[1:]):
        if (i1 - i0, j1 - j0) not in ((1, 0), (0, 1), (1, 1)):
            return False
    return True


def enumerate_paths(k: int) -> WarpPathSet:
    """All alignment paths on a ``k x k`` grid (a Delannoy number of them)."""
    if not 2 <= k <= 6:
        raise ParameterError(f"path enumeration supports 2 <= k <= 6, got {k}")
    out = []

    def walk(i, j, cells):
        if (i, j) == (k - 1, k - 1):
            a = np.zeros((k, k))
            a[tuple(np.array(cells).T)] = 1.0
            out.append(a)
            return
        for di, dj in ((0, 1), (1, 0), (1, 1)):
            ni, nj = i + di, j + dj
            if ni < k and nj < k:
                walk(ni, nj, cells + [(ni, nj)])

    walk(0, 0, [(0, 0)])
    return WarpPathSet(tuple(out))


def brute_force_soft_dtw(delta: np.ndarray, gamma: float, paths: WarpPathSet | None = None) -> float:
    paths = paths or enumerate_paths(delta.shape[0])
    costs = np.einsum("pij,ij->p", paths.stacked(), delta)
    low = costs.min()
    return float(low - gamma * np.log(np.sum(np.exp(-(costs - low) / gamma))))


def brute_force_temporal(delta: np.ndarray, omega: np.ndarray, gamma: float, paths: WarpPathSet | None = None) -> float:
    paths = paths or enumerate_paths(delta.shape[0])
    stacked = paths.stacked()
    costs = np.einsum("pij,ij->p", stacked, delta)
    weights = np.exp(-(costs - costs.min()) / gamma)
    penalties = np.einsum("pij,ij->p", stacked, omega)
    return float(np.sum(weights * penalties) / np.sum(weights))


def hard_dtw(delta: np.ndarray, paths: WarpPathSet | None = None) -> tuple[float, np.ndarray]:
    """Minimum path cost and the minimizing path, by enumeration."""
    paths = paths or enumerate_paths(delta.shape[0])
    stacked = paths.stacked()
    costs = np.einsum("pij,ij->p", stacked, delta)
    best = int(np.argmin(costs))
    return float(costs[best]), stacked[best]


def delannoy(m: int, n: int) -> int:
    return sum(math.comb(m, i) * math.comb(n, i) * 2**i for i in range(min(m, n) + 1))
