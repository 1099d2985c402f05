"""Training-free colour-projection pulse extractors (POS and CHROM)."""

from __future__ import annotations

import math

import numpy as np

from ..errors import DegenerateSignalError, ParameterError
from ..types import FrameSequence, PpgSignal
from .filters import butterworth_bandpass
from .hr import HR_BAND_HZ

POS_PROJECTION = np.array([[0.0, 1.0, -1.0], [-2.0, 1.0, 1.0]])


def _normalized_trace(frames: FrameSequence, mask) -> np.ndarray:
    rgb = frames.rgb_trace(mask)
    means = rgb.mean(axis=0)
    if np.any(means <= 0):
        raise DegenerateSignalError("a colour channel is zero throughout the sequence")
    return rgb


def _ratio(a: np.ndarray, b: np.ndarray) -> float:
    sb = b.std()
    return 0.0 if sb < 1e-15 else a.std() / sb


def pos_baseline(frames: FrameSequence, window_seconds: float = 1.6, mask=None) -> PpgSignal:
    """Plane-orthogonal-to-skin pulse with sliding-window overlap-add."""
    rgb = _normalized_trace(frames, mask)
    n = rgb.shape[0]
    win = int(math.ceil(window_seconds * frames.fps))
    if n < win:
        raise ParameterError(f"POS needs at least {window_seconds}s of frames ({win}), got {n}")
    out = np.zeros(n)
    for end in range(win, n + 1):
        block = rgb[end - win : end]
        cn = block / block.mean(axis=0)
        s = cn @ POS_PROJECTION.T
        h = s[:, 0] + _ratio(s[:, 0], s[:, 1]) * s[:, 1]
        out[end - win : end] += h - h.mean()
    return PpgSignal(out, frames.fps)


def chrom_baseline(frames: FrameSequence, band=HR_BAND_HZ, order: int = 1, mask=None) -> PpgSignal:
    """Chrominance pulse ``Xf - (sd(Xf)/sd(Yf)) * Yf`` over the whole sequence."""
    rgb = _normalized_trace(frames, mask)
    cn = rgb / rgb.mean(axis=0)
    r, g, b = cn[:, 0], cn[:, 1], cn[:, 2]
    xs = PpgSignal(3.0 * r - 2.0 * g, frames.fps)
    ys = PpgSignal(1.5 * r + g - 1.5 * b, frames.fps)
    xf = butterworth_bandpass(xs, band[0], band[1], order).samples
    yf = butterworth_bandpass(ys, band[0], band[1], order).samples
    return PpgSignal(xf - _ratio(xf, yf) * yf, frames.fps)
