from __future__ import annotations

import numpy as np
from scipy import signal as sps

from ..errors import ParameterError
from ..types import PpgSignal


def butterworth_sos(fs: float, lo_hz: float, hi_hz: float, order: int = 1) -> np.ndarray:
    if order < 1:
        raise ParameterError(f"filter order must be >= 1, got {order}")
    if not 0 < lo_hz < hi_hz < fs / 2:
        raise ParameterError(
            f"band {lo_hz}-{hi_hz} Hz must satisfy 0 < lo < hi < Nyquist ({fs / 2} Hz)"
        )
    return sps.butter(order, [lo_hz, hi_hz], btype="bandpass", fs=fs, output="sos")


def butterworth_bandpass(x: PpgSignal, lo_hz: float, hi_hz: float, order: int = 1) -> PpgSignal:
    """Zero-phase Butterworth band-pass (forward-backward biquad cascade)."""
    sos = butterworth_sos(x.fs, lo_hz, hi_hz, order)
    try:
        y = sps.sosfiltfilt(sos, x.samples)
    except ValueError as exc:
        raise ParameterError(f"signal too short for zero-phase filtering: {exc}") from exc
    return x.with_samples(y)


def steady_state_gain(fs: float, lo_hz: float, hi_hz: float, order: int, freq_hz: float) -> float:
    """Magnitude response of the forward-backward filter at ``freq_hz``."""
    _, h = sps.sosfreqz(butterworth_sos(fs, lo_hz, hi_hz, order), worN=[freq_hz], fs=fs)
    return float(np.abs(h[0]) ** 2)
