"""Point cloud container and RGB <-> YCbCr conversion.

Colors are kept real-valued internally so enhanced (fractional) values
survive the pipeline; quantization to 8 bits happens only on file write.
Conversion uses the ITU-R BT.709 full-range matrix by default, with
round-half-away-from-zero rounding so results are identical across
platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import validation
from .errors import InvalidArgument

RGB8 = "RGB8"
YCBCR8 = "YCbCr8"

# BT.709 luma coefficients (kr, kg, kb). Chroma scale factors follow as
# 2*(1-kb) and 2*(1-kr).
BT709 = (0.2126, 0.7152, 0.0722)


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer with halves going away from zero."""
    x = np.asarray(x, dtype=np.float64)
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


@dataclass(frozen=True)
class PointCloud:
    """N points with integer voxel coordinates and 3-channel real colors.

    Immutable after construction: the backing arrays are marked read-only,
    so a cloud can be shared across workers without copying.
    """

    coords: np.ndarray
    colors: np.ndarray
    color_space: str = RGB8
    geometry_bitdepth: int = 10

    def __post_init__(self):
        coords = validation.check_coords_array(self.coords)
        colors = validation.check_colors_array(self.colors, coords.shape[0])
        if self.color_space not in (RGB8, YCBCR8):
            raise InvalidArgument(f"unknown color space {self.color_space!r}")
        if self.geometry_bitdepth < 1:
            raise InvalidArgument("geometry_bitdepth must be >= 1")
        coords = np.ascontiguousarray(coords)
        colors = np.ascontiguousarray(colors)
        coords.setflags(write=False)
        colors.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "colors", colors)

    def __len__(self) -> int:
        return self.coords.shape[0]

    def with_colors(self, colors: np.ndarray, color_space: str | None = None) -> "PointCloud":
        """New cloud sharing this geometry with replaced colors."""
        return replace(
            self,
            colors=colors,
            color_space=self.color_space if color_space is None else color_space,
        )


def infer_bitdepth(coords: np.ndarray) -> int:
    """Smallest bit depth whose voxel range covers max(coords)."""
    top = int(np.max(coords)) if coords.size else 0
    return max(1, int(top).bit_length())


def _matrices(coeffs):
    kr, kg, kb = coeffs
    if abs(kr + kg + kb - 1.0) > 1e-9:
        raise InvalidArgument("luma coefficients must sum to 1")
    cb_div = 2.0 * (1.0 - kb)
    cr_div = 2.0 * (1.0 - kr)
    return kr, kg, kb, cb_div, cr_div


def rgb_to_ycbcr(pc: PointCloud, coeffs=BT709) -> PointCloud:
    """Full-range RGB -> YCbCr, rounded to integers and clamped to [0, 255]."""
    validation.check_color_space(pc, RGB8)
    kr, kg, kb, cb_div, cr_div = _matrices(coeffs)
    r, g, b = pc.colors[:, 0], pc.colors[:, 1], pc.colors[:, 2]
    y = kr * r + kg * g + kb * b
    cb = (b - y) / cb_div + 128.0
    cr = (r - y) / cr_div + 128.0
    out = np.stack([y, cb, cr], axis=1)
    out = np.clip(round_half_away(out), 0.0, 255.0)
    return pc.with_colors(out, YCBCR8)


def ycbcr_to_rgb(pc: PointCloud, coeffs=BT709) -> PointCloud:
    """Inverse full-range transform, rounded and clamped.

    Composed with rgb_to_ycbcr the per-channel round-trip error is at
    most 1 (each channel carries <=0.5 quantization error through the
    inverse matrix, which keeps the total below half a level).
    """
    validation.check_color_space(pc, YCBCR8)
    kr, kg, kb, cb_div, cr_div = _matrices(coeffs)
    y, cb, cr = pc.colors[:, 0], pc.colors[:, 1], pc.colors[:, 2]
    r = y + cr_div * (cr - 128.0)
    b = y + cb_div * (cb - 128.0)
    g = (y - kr * r - kb * b) / kg
    out = np.stack([r, g, b], axis=1)
    out = np.clip(round_half_away(out), 0.0, 255.0)
    return pc.with_colors(out, RGB8)
