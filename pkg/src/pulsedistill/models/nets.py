"""Toy-scale 3D teacher and 2D+TSM student with six attention-masked stages."""

from __future__ import annotations

import numpy as np

from ..diffcore import Module, Tensor, adaptive_avg_pool, as_tensor
from ..errors import ParameterError
from .layers import AttentionMask, Conv, ConvTranspose, Dense
from .tsm import TemporalShift, TsmConfig

STAGE_CHANNELS = (4, 8, 8, 16, 16, 8)
# spatial down-scaling factor of each stage relative to the input
STAGE_SCALE = (1, 2, 2, 4, 4, 4)
IN_CHANNELS = 3


def stage_sizes(input_hw: int, n_stages: int = len(STAGE_SCALE)) -> list[int]:
    sizes = [max(1, input_hw // s) for s in STAGE_SCALE[:n_stages]]
    return sizes


def _rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


class _Net(Module):
    def _check_input(self, x: Tensor) -> Tensor:
        x = as_tensor(x)
        if x.ndim != 4 or x.shape[1] != IN_CHANNELS:
            raise ParameterError(f"expected frames x 3 x H x W input, got {x.shape}")
        if x.shape[2] != self.input_hw or x.shape[3] != self.input_hw:
            raise ParameterError(f"expected {self.input_hw}x{self.input_hw} frames, got {x.shape[2:]}")
        if self.seq_len is not None and x.shape[0] != self.seq_len:
            raise ParameterError(f"expected {self.seq_len} frames, got {x.shape[0]}")
        return x

    def __call__(self, x):
        return self.forward(x)


class TeacherNet(_Net):
    """3D-conv encoder1 (stages 1-2), encoder2 (3-4) and transpose-conv decoder (5-6).

    Input ``(T, 3, H, W)`` is processed as one ``(1, 3, T, H, W)`` volume.
    Stage features are returned as ``(C, T, H', W')``.
    """

    def __init__(self, input_hw: int = 16, channels=STAGE_CHANNELS, seq_len: int | None = None,
                 attention: bool = True, seed=0):
        rng = _rng(seed)
        self.input_hw, self.seq_len, self.attention = input_hw, seq_len, attention
        self.channels = tuple(channels)
        self.sizes = stage_sizes(input_hw, len(self.channels))
        self.stages = []
        self.masks = []
        cin = IN_CHANNELS
        n_encoder = len(self.channels) - 2
        for i, cout in enumerate(self.channels):
            layer_cls = Conv if i < n_encoder else ConvTranspose
            self.stages.append(layer_cls(3, cin, cout, 3, 1, 1, rng=rng))
            self.masks.append(AttentionMask(3, cout, rng=rng))
            cin = cout
        self.head = Conv(3, cin, 1, 1, rng=rng)

    @property
    def encoder1(self):
        return self.stages[:2]

    @property
    def encoder2(self):
        return self.stages[2:-2]

    @property
    def decoder(self):
        return self.stages[-2:]

    def forward(self, x) -> tuple[Tensor, list[Tensor]]:
        x = self._check_input(x)
        t, c, h, w = x.shape
        v = x.transpose(1, 0, 2, 3).reshape(1, c, t, h, w)
        features = []
        for layer, mask, size in zip(self.stages, self.masks, self.sizes):
            if v.shape[3] != size:
                v = adaptive_avg_pool(v, (size, size))
            v = layer(v).relu()
            if self.attention:
                v = mask(v)
            features.append(v.reshape(v.shape[1:]))
        v = adaptive_avg_pool(v, (1, 1))
        out = self.head(v).reshape(t)
        return out, features


class StudentNet(_Net):
    """Per-frame 2D convolutions with temporal shifts, frames on the batch axis.

    ``head="deconv"`` ends with transpose-conv, adaptive average pooling and
    a 1x1 conv; ``head="dense"`` swaps that for a two-layer fully connected
    head of matched width (the parameter-count comparison baseline).
    """

    def __init__(self, input_hw: int = 16, channels=STAGE_CHANNELS, tsm: TsmConfig | str = "TSM1",
                 seq_len: int | None = None, attention: bool = True, head: str = "deconv", seed=0):
        rng = _rng(seed)
        cfg = tsm if isinstance(tsm, TsmConfig) else TsmConfig(tsm)
        self.tsm_cfg = cfg
        self.input_hw, self.seq_len, self.attention = input_hw, seq_len, attention
        self.channels = tuple(channels)
        self.sizes = stage_sizes(input_hw, len(self.channels))
        if head not in ("deconv", "dense"):
            raise ParameterError(f"unknown head {head!r}")
        self.head_kind = head
        self.shifts, self.stages, self.masks = [], [], []
        cin = IN_CHANNELS
        for cout, size in zip(self.channels, self.sizes):
            self.shifts.append(TemporalShift(cfg, cin, pool_out=(size, size), rng=rng))
            self.stages.append(Conv(2, cin, cout, 3, 1, 1, rng=rng))
            self.masks.append(AttentionMask(2, cout, rng=rng))
            cin = cout
        last = self.sizes[-1]
        if head == "deconv":
            self.head_deconv = ConvTranspose(2, cin, cin, 3, 1, 1, rng=rng)
            self.head_out = Conv(2, cin, 1, 1, rng=rng)
        else:
            self.head_fc1 = Dense(cin * last * last, cin, rng=rng)
            self.head_fc2 = Dense(cin, 1, rng=rng)

    def forward(self, x) -> tuple[Tensor, list[Tensor]]:
        x = self._check_input(x)
        t = x.shape[0]
        features = []
        for shift, layer, mask, size in zip(self.shifts, self.stages, self.masks, self.sizes):
            if x.shape[2] != size and self.tsm_cfg.variant != "TSM2":
                x = adaptive_avg_pool(x, (size, size))
            x = layer(shift(x)).relu()
            if self.attention:
                x = mask(x)
            features.append(x)
        if self.head_kind == "deconv":
            y = self.head_deconv(x).relu()
            y = adaptive_avg_pool(y, (1, 1))
            out = self.head_out(y).reshape(t)
        else:
            flat = x.reshape(t, -1)
            out = self.head_fc2(self.head_fc1(flat).relu()).reshape(t)
        return out, features
