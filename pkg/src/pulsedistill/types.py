"""Data carriers shared across subpackages."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteError, ParameterError


@dataclass(frozen=True)
class PpgSignal:
    """A uniformly sampled 1-D waveform."""

    samples: np.ndarray
    fs: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if not self.fs > 0:
            raise ParameterError(f"sampling rate must be positive, got {self.fs}")
        if samples.size < 2:
            raise ParameterError("a signal needs at least 2 samples")
        if not np.all(np.isfinite(samples)):
            raise NonFiniteError("signal contains NaN or infinity")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "fs", float(self.fs))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.fs

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.fs

    def with_samples(self, samples) -> "PpgSignal":
        return PpgSignal(samples, self.fs)


@dataclass(frozen=True)
class FrameSequence:
    """Cropped RGB frames, ``T x H x W x 3``, values in [0, 1]."""

    frames: np.ndarray
    fps: float
    subject: str = ""
    condition: str = ""
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.dtype == np.uint8:
            frames = frames.astype(np.float64) / 255.0
        else:
            frames = frames.astype(np.float64, copy=False)
        if frames.ndim != 4 or frames.shape[-1] != 3:
            raise ParameterError(f"frames must be T x H x W x 3, got {frames.shape}")
        if frames.shape[0] < 2:
            raise ParameterError("a frame sequence needs at least 2 frames")
        if not self.fps > 0:
            raise ParameterError(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "fps", float(self.fps))

    def __len__(self) -> int:
        return self.frames.shape[0]

    def rgb_trace(self, mask: np.ndarray | None = None) -> np.ndarray:
        """Spatial mean colour per frame, shape ``T x 3``."""
        if mask is None:
            return self.frames.mean(axis=(1, 2))
        weights = np.asarray(mask, dtype=np.float64)
        return np.einsum("thwc,hw->tc", self.frames, weights) / weights.sum()
