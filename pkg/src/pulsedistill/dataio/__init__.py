"""File formats, frame-difference preprocessing and the synthetic video generator."""

from .formats import (
    read_checkpoint,
    read_frames,
    read_hr,
    read_ppg,
    read_tensor,
    write_checkpoint,
    write_frames,
    write_hr,
    write_ppg,
    write_tensor,
)
from .preprocess import LABEL_BAND_HZ, frame_diff, prepare_label, raw_frame_diff, zscore
from .synth import SynthConfig, pulse_wave, skin_mask, synth_video

__all__ = [
    "LABEL_BAND_HZ",
    "SynthConfig",
    "frame_diff",
    "prepare_label",
    "pulse_wave",
    "raw_frame_diff",
    "read_checkpoint",
    "read_frames",
    "read_hr",
    "read_ppg",
    "read_tensor",
    "skin_mask",
    "synth_video",
    "write_checkpoint",
    "write_frames",
    "write_hr",
    "write_ppg",
    "write_tensor",
    "zscore",
]
