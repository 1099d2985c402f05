"""Attention feature distillation between teacher and student stage outputs.

Teacher features are laid out ``(C, T, H, W)`` and student features
``(T, C, H, W)``. Each layer's residual is weighted per channel by a
squeeze-excitation gate evaluated on the teacher feature.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .diffcore import Module, Tensor, adaptive_avg_pool, as_tensor, uniform_init
from .errors import ArchitectureError, ParameterError

DEFAULT_REDUCTION = 2
DEFAULT_LAMBDA_AFD = 1.0
DEFAULT_BETA = 10.0
DEFAULT_ETA = 10.0


class SEWeights(Module):
    """Two-layer channel gate ``sigmoid(w2 . relu(w1 . squeeze))`` without biases."""

    def __init__(self, channels: int, reduction: int = DEFAULT_REDUCTION, rng=None, zero: bool = False):
        if reduction < 1 or channels % reduction:
            raise ParameterError(f"{channels} channels not divisible by reduction ratio {reduction}")
        self.channels, self.reduction = channels, reduction
        hidden = channels // reduction
        if zero:
            self.w1 = Tensor(np.zeros((channels, hidden)), requires_grad=True)
            self.w2 = Tensor(np.zeros((hidden, channels)), requires_grad=True)
        else:
            rng = rng if rng is not None else np.random.default_rng(0)
            self.w1 = uniform_init(rng, (channels, hidden), channels)
            self.w2 = uniform_init(rng, (hidden, channels), hidden)


def se_attention(feature, weights: SEWeights, channel_axis: int = 0) -> Tensor:
    """Per-channel importance in (0, 1) from the global mean of each channel."""
    feature = as_tensor(feature)
    if feature.shape[channel_axis] != weights.channels:
        raise ParameterError(
            f"feature has {feature.shape[channel_axis]} channels, SE block expects {weights.channels}"
        )
    others = tuple(ax for ax in range(feature.ndim) if ax != channel_axis % feature.ndim)
    squeezed = feature.mean(axis=others)
    return ((squeezed @ weights.w1).relu() @ weights.w2).sigmoid()


@dataclass
class FeaturePair:
    hint: Tensor  # teacher, (C, T, H, W)
    guided: Tensor  # student, (T, C, H, W)
    layer_index: int = 1


STUDENT_TO_TEACHER = (1, 0, 2, 3)


def unalign_student(aligned: Tensor) -> Tensor:
    """Inverse of the student permutation in :func:`align_features` (no pooling)."""
    return aligned.transpose(STUDENT_TO_TEACHER)


def align_features(pair: FeaturePair) -> tuple[Tensor, Tensor]:
    """Bring both features to the teacher's ``(C, T, H, W)`` layout and size.

    The student's frame axis takes the place of the teacher's time axis; when
    spatial sizes differ, the larger map is average-pooled to the smaller.
    """
    hint, guided = as_tensor(pair.hint), as_tensor(pair.guided)
    if hint.ndim != 4 or guided.ndim != 4:
        raise ArchitectureError("features must be rank 4")
    student = guided.transpose(STUDENT_TO_TEACHER)
    if student.shape[0] != hint.shape[0]:
        raise ArchitectureError(
            f"layer {pair.layer_index}: teacher has {hint.shape[0]} channels, student {student.shape[0]}"
        )
    if student.shape[1] != hint.shape[1]:
        raise ArchitectureError(
            f"layer {pair.layer_index}: teacher time axis {hint.shape[1]} != student frames {student.shape[1]}"
        )
    target = tuple(min(a, b) for a, b in zip(hint.shape[2:], student.shape[2:]))
    if hint.shape[2:] != target:
        hint = adaptive_avg_pool(hint, target)
    if student.shape[2:] != target:
        student = adaptive_avg_pool(student, target)
    return hint, student


def afd_loss(
    pairs: Sequence[FeaturePair],
    se: Sequence[SEWeights],
    lambda_afd: float = DEFAULT_LAMBDA_AFD,
    normalize: bool = True,
) -> Tensor:
    """Channel-weighted squared feature residual summed over layers.

    The teacher feature is detached, so no gradient reaches the teacher;
    gradients flow to the student features and to the SE weights. With
    ``normalize`` each channel's squared norm is divided by its element count.
    """
    if not pairs:
        raise ParameterError("afd_loss needs at least one feature pair")
    if len(se) != len(pairs):
        raise ArchitectureError(f"{len(pairs)} feature pairs but {len(se)} SE blocks")
    if lambda_afd < 0:
        raise ParameterError("lambda_afd must be non-negative")
    total = None
    for pair, gate in zip(pairs, se):
        hint, guided = align_features(pair)
        hint = hint.detach()
        rho = se_attention(hint, gate)
        resid = hint - guided
        per_channel = (resid * resid).sum(axis=(1, 2, 3))
        if normalize:
            per_channel = per_channel * (1.0 / float(np.prod(resid.shape[1:])))
        term = (rho * per_channel).sum()
        total = term if total is None else total + term
    return total * float(lambda_afd)


def total_loss(afd, dilate, beta: float = DEFAULT_BETA, eta: float = DEFAULT_ETA) -> Tensor:
    if beta < 0 or eta < 0:
        raise ParameterError("beta and eta must be non-negative")
    return as_tensor(afd) * float(beta) + as_tensor(dilate) * float(eta)
