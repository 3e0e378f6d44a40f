"""Input validation helpers shared by the estimator and the lower layers."""

from __future__ import annotations

import numpy as np

from .errors import GeometryMismatch, InvalidArgument, ShapeMismatch, WrongColorSpace

COMPONENTS = ("Y", "Cb", "Cr")
COMPONENT_INDEX = {"Y": 0, "Cb": 1, "Cr": 2}


def check_component(component: str) -> int:
    """Return the channel index of a color component name."""
    if component not in COMPONENT_INDEX:
        raise InvalidArgument(f"component must be one of {COMPONENTS}, got {component!r}")
    return COMPONENT_INDEX[component]


def check_coords_array(coords) -> np.ndarray:
    """Coerce to an (N, 3) int64 coordinate array."""
    arr = np.asarray(coords)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ShapeMismatch(f"coords must be (N, 3), got {arr.shape}")
    if arr.shape[0] < 1:
        raise InvalidArgument("point cloud must contain at least one point")
    if not np.issubdtype(arr.dtype, np.integer):
        rounded = np.rint(arr)
        if not np.allclose(arr, rounded, atol=0.0):
            raise InvalidArgument("coords must be integer voxel positions")
        arr = rounded
    return arr.astype(np.int64, copy=False)


def check_colors_array(colors, n_points: int) -> np.ndarray:
    """Coerce to an (N, 3) float64 color array with finite values in [0, 255]."""
    arr = np.asarray(colors, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ShapeMismatch(f"colors must be (N, 3), got {arr.shape}")
    if arr.shape[0] != n_points:
        raise ShapeMismatch(
            f"colors row count {arr.shape[0]} does not match coords row count {n_points}"
        )
    if not np.isfinite(arr).all():
        raise InvalidArgument("colors contain NaN or Inf")
    if arr.min() < 0.0 or arr.max() > 255.0:
        raise InvalidArgument("color values must lie in [0, 255]")
    return arr


def check_color_space(pc, expected: str) -> None:
    if pc.color_space != expected:
        raise WrongColorSpace(f"expected {expected} cloud, got {pc.color_space}")


def check_same_geometry(ref, test) -> None:
    """Both clouds must have identical point count, order and coordinates."""
    if ref.coords.shape != test.coords.shape:
        raise GeometryMismatch(
            f"point counts differ: {ref.coords.shape[0]} vs {test.coords.shape[0]}"
        )
    if not np.array_equal(ref.coords, test.coords):
        raise GeometryMismatch("clouds do not share coordinates (geometry must be lossless)")


def check_positive(name: str, value) -> None:
    if value <= 0:
        raise InvalidArgument(f"{name} must be positive, got {value}")
