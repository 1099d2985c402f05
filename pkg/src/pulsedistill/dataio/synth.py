"""Seeded synthetic pulsatile face videos with known ground truth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError
from ..types import FrameSequence, PpgSignal

SKIN_RGB = (0.72, 0.52, 0.42)
BACKGROUND_RGB = (0.30, 0.33, 0.35)
# relative pulsatile strength per channel, green normalized to 1
PULSE_CHANNEL_WEIGHTS = (0.43, 1.0, 0.69)


@dataclass(frozen=True)
class SynthConfig:
    hr_hz: float = 1.5
    pulse_amp: float = 0.01
    harmonic_amp: float = 0.0
    noise_sd: float = 0.0
    illum_drift_hz: float = 0.0
    illum_drift_amp: float = 0.0
    motion_px: float = 0.0
    motion_hz: float = 0.3
    phase: float = 0.0
    channel_weights: tuple[float, float, float] = PULSE_CHANNEL_WEIGHTS
    seed: int = 0

    def __post_init__(self):
        if not 0.75 <= self.hr_hz <= 3.0:
            raise ParameterError(f"hr_hz must lie in the 0.75-3 Hz band, got {self.hr_hz}")
        if not self.pulse_amp > 0:
            raise ParameterError("pulse_amp must be positive")
        if self.noise_sd < 0:
            raise ParameterError("noise_sd must be non-negative")


def pulse_wave(cfg: SynthConfig, t: np.ndarray) -> np.ndarray:
    w = 2 * np.pi * cfg.hr_hz * t + cfg.phase
    return np.sin(w) + cfg.harmonic_amp * np.sin(2 * w)


def skin_mask(h: int, w: int, dy: float = 0.0, dx: float = 0.0) -> np.ndarray:
    """Elliptical face region covering roughly half of the frame."""
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = (h - 1) / 2 + dy, (w - 1) / 2 + dx
    ry, rx = 0.42 * h, 0.34 * w
    return ((((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2) <= 1.0).astype(np.float64)


def synth_video(cfg: SynthConfig, n_frames: int, h: int = 32, w: int = 32, fps: float = 30.0,
                subject: str = "synthetic", condition: str = "") -> tuple[FrameSequence, PpgSignal]:
    """Frames ``base * (1 + amp * weight_c * p(t) * mask) + drift(t) + noise`` and ``p(t)``."""
    if n_frames < 2:
        raise ParameterError("need at least 2 frames")
    rng = np.random.default_rng(cfg.seed)
    t = np.arange(n_frames) / fps
    p = pulse_wave(cfg, t)
    weights = np.asarray(cfg.channel_weights, dtype=np.float64)
    skin = np.asarray(SKIN_RGB)
    bg = np.asarray(BACKGROUND_RGB)
    drift = cfg.illum_drift_amp * np.sin(2 * np.pi * cfg.illum_drift_hz * t)
    frames = np.empty((n_frames, h, w, 3))
    static = None if cfg.motion_px else skin_mask(h, w)
    for i in range(n_frames):
        if static is None:
            shift = cfg.motion_px * np.sin(2 * np.pi * cfg.motion_hz * t[i])
            mask = skin_mask(h, w, 0.5 * shift, shift)
        else:
            mask = static
        base = mask[..., None] * skin + (1.0 - mask[..., None]) * bg
        pulse = 1.0 + cfg.pulse_amp * p[i] * weights * mask[..., None]
        frames[i] = base * pulse + drift[i]
    if cfg.noise_sd > 0:
        frames += rng.normal(0.0, cfg.noise_sd, size=frames.shape)
    np.clip(frames, 0.0, 1.0, out=frames)
    return FrameSequence(frames, fps, subject, condition), PpgSignal(p, fps)
