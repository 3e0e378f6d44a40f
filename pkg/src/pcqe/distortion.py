"""Synthetic codec-like color distortion.

Manufactures (clean, distorted) pairs without an external codec: color
quantization reproduces banding, neighborhood smoothing reproduces the
low-pass blur of transform coding. Geometry is never touched. The
network and the metrics are agnostic to where distortion comes from, so
real codec output can replace this module without code changes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import validation
from .cloud import YCBCR8, PointCloud, round_half_away, rgb_to_ycbcr
from .errors import InvalidArgument
from .patches import knn_indices

# Rough stand-ins for codec quantization parameters, highest QP first:
# QP -> (color quantization step, smoothing strength).
QP_TABLE = {
    51: (32, 0.50),
    46: (16, 0.30),
    40: (8, 0.20),
    34: (4, 0.10),
    28: (2, 0.05),
    22: (1, 0.00),
}

DEFAULT_SMOOTH_K = 8


@dataclass(frozen=True)
class DistortionLevel:
    """One synthetic rate point: quantization step plus smoothing blur."""

    quant_step: int
    smooth_strength: float = 0.0
    smooth_k: int = DEFAULT_SMOOTH_K
    seed: int = 0

    def __post_init__(self):
        if self.quant_step < 1:
            raise InvalidArgument(f"quant_step must be >= 1, got {self.quant_step}")
        if not 0.0 <= self.smooth_strength <= 1.0:
            raise InvalidArgument("smooth_strength must lie in [0, 1]")
        if self.smooth_k < 1:
            raise InvalidArgument("smooth_k must be >= 1")


def level_for_qp(qp: int) -> DistortionLevel:
    if qp not in QP_TABLE:
        raise InvalidArgument(f"no distortion mapping for QP {qp}; known: {sorted(QP_TABLE)}")
    step, smooth = QP_TABLE[qp]
    return DistortionLevel(quant_step=step, smooth_strength=smooth)


def quantize_colors(pc: PointCloud, step: int) -> PointCloud:
    """Uniform per-channel quantization: round(v / step) * step, clamped."""
    validation.check_color_space(pc, YCBCR8)
    if step < 1:
        raise InvalidArgument(f"step must be >= 1, got {step}")
    if step == 1:
        return pc
    out = np.clip(round_half_away(pc.colors / step) * step, 0.0, 255.0)
    return pc.with_colors(out)


def neighborhood_smooth(pc: PointCloud, k: int, strength: float) -> PointCloud:
    """Blend each color toward the mean of its k-neighborhood (self included)."""
    if not 0.0 <= strength <= 1.0:
        raise InvalidArgument("strength must lie in [0, 1]")
    if k < 1:
        raise InvalidArgument("k must be >= 1")
    if strength == 0.0:
        return pc
    idx = knn_indices(pc.coords, np.arange(len(pc)), min(k, len(pc)))
    local_mean = pc.colors[idx].mean(axis=1)
    out = (1.0 - strength) * pc.colors + strength * local_mean
    return pc.with_colors(out)


@dataclass(frozen=True)
class DistortedPair:
    """A training/eval sample: the clean cloud, its distortion, the level used."""

    clean: PointCloud
    distorted: PointCloud
    level: DistortionLevel


def distort(pc: PointCloud, level: DistortionLevel) -> PointCloud:
    """Apply one level: quantize, then smooth. Deterministic per level."""
    out = quantize_colors(pc, level.quant_step)
    if level.smooth_strength > 0.0:
        out = neighborhood_smooth(out, level.smooth_k, level.smooth_strength)
    return out


def make_pairs(clean: PointCloud, levels) -> list[DistortedPair]:
    """One (clean, distorted) pair per level; clean is converted to YCbCr."""
    levels = list(levels)
    if not levels:
        raise InvalidArgument("at least one distortion level is required")
    if clean.color_space != YCBCR8:
        clean = rgb_to_ycbcr(clean)
    return [DistortedPair(clean=clean, distorted=distort(clean, lvl), level=lvl)
            for lvl in levels]
