from __future__ import annotations

import numpy as np

from ..errors import DegenerateSignalError, ParameterError
from ..signal.filters import butterworth_bandpass
from ..types import FrameSequence, PpgSignal

LABEL_BAND_HZ = (0.5, 3.0)


def raw_frame_diff(seq: FrameSequence) -> np.ndarray:
    """``(c(t+1) - c(t)) / (c(t) + c(t+1) + 1)`` per pixel, as ``(T-1) x 3 x H x W``."""
    c = seq.frames
    if c.shape[0] < 2:
        raise ParameterError("frame differencing needs at least 2 frames")
    d = (c[1:] - c[:-1]) / (c[:-1] + c[1:] + 1.0)
    return np.ascontiguousarray(d.transpose(0, 3, 1, 2))


def zscore(x: np.ndarray, what: str = "signal") -> np.ndarray:
    sd = x.std()
    if not sd > 0:
        raise DegenerateSignalError(f"{what} has zero standard deviation")
    return (x - x.mean()) / sd


def frame_diff(seq: FrameSequence) -> np.ndarray:
    """Normalized frame differences, z-scored over the whole sequence."""
    return zscore(raw_frame_diff(seq), "frame differences")


def prepare_label(ppg: PpgSignal, length: int | None = None, band=LABEL_BAND_HZ, order: int = 1) -> PpgSignal:
    """First difference, z-score, then band-pass; truncated to ``length``."""
    if len(ppg) < 3:
        raise ParameterError("label preparation needs at least 3 samples")
    d = zscore(np.diff(ppg.samples), "PPG derivative")
    out = butterworth_bandpass(PpgSignal(d, ppg.fs), band[0], band[1], order)
    if length is not None:
        if length > len(out):
            raise ParameterError(f"label has {len(out)} samples, {length} requested")
        out = out.with_samples(out.samples[:length])
    return out
