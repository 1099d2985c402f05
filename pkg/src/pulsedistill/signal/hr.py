from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError
from ..types import PpgSignal
from .filters import butterworth_bandpass

HR_BAND_HZ = (0.75, 3.0)


@dataclass(frozen=True)
class HrSeries:
    """Windowed heart-rate estimates in beats per minute."""

    values: np.ndarray
    window_seconds: float
    fs_source: float
    starts: np.ndarray | None = None
    resolution_bpm: float = float("nan")

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not self.window_seconds > 0:
            raise ParameterError("window_seconds must be positive")
        lo, hi = 60 * HR_BAND_HZ[0], 60 * HR_BAND_HZ[1]
        if np.any((values < lo - 1e-9) | (values > hi + 1e-9)):
            raise ParameterError(f"heart rates must lie in [{lo}, {hi}] bpm")
        object.__setattr__(self, "values", values)
        if self.starts is not None:
            object.__setattr__(self, "starts", np.asarray(self.starts, dtype=np.float64).reshape(-1))

    def __len__(self) -> int:
        return self.values.size


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def estimate_hr(
    x: PpgSignal,
    window_seconds: float = 10.0,
    band=HR_BAND_HZ,
    stride_seconds: float | None = None,
    pad_factor: int = 4,
) -> HrSeries:
    """Spectral-peak heart rate over consecutive windows.

    Each window is mean-removed, Hann-tapered and zero-padded to the next
    power of two >= ``pad_factor`` times its length. The in-band frequency
    with the largest power gives ``HR = 60 * f``. Windows do not overlap
    unless ``stride_seconds`` is shorter than ``window_seconds``.
    """
    lo, hi = band
    if not 0 < lo < hi <= x.fs / 2:
        raise ParameterError(f"band {band} invalid for fs={x.fs}")
    n = int(round(window_seconds * x.fs))
    if n < 2 or len(x) < n:
        raise ParameterError(
            f"signal of {len(x)} samples is shorter than one {window_seconds}s window ({n} samples)"
        )
    step = n if stride_seconds is None else int(round(stride_seconds * x.fs))
    if step < 1:
        raise ParameterError("stride must cover at least one sample")
    nfft = _next_pow2(pad_factor * n)
    freqs = np.fft.rfftfreq(nfft, d=1.0 / x.fs)
    in_band = np.flatnonzero((freqs >= lo) & (freqs <= hi))
    if in_band.size == 0:
        raise ParameterError("no FFT bin falls inside the band")
    taper = np.hanning(n)
    starts = np.arange(0, len(x) - n + 1, step)
    hrs = np.empty(starts.size)
    for i, s in enumerate(starts):
        seg = x.samples[s : s + n]
        power = np.abs(np.fft.rfft((seg - seg.mean()) * taper, nfft)) ** 2
        hrs[i] = 60.0 * freqs[in_band[np.argmax(power[in_band])]]
    return HrSeries(hrs, float(window_seconds), x.fs, starts / x.fs, 60.0 * x.fs / nfft)


def heart_rate(
    x: PpgSignal,
    window_seconds: float = 10.0,
    band=HR_BAND_HZ,
    order: int = 1,
    stride_seconds: float | None = None,
) -> HrSeries:
    """Band-pass ``x`` and then run :func:`estimate_hr` (the evaluation pipeline)."""
    filtered = butterworth_bandpass(x, band[0], band[1], order)
    return estimate_hr(filtered, window_seconds, band, stride_seconds)
