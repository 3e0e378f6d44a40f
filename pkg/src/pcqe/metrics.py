"""Objective quality measures: PSNR, combined YCbCr PSNR, and
Bjontegaard delta metrics over rate-distortion curves.

Geometry is assumed lossless, so point correspondence between the
reference and test cloud is the identity.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import validation
from .cloud import PointCloud
from .errors import InsufficientPoints, InvalidArgument, NoOverlap

YCBCR_WEIGHTS = (6.0, 1.0, 1.0)
MIN_BD_POINTS = 4


def psnr(ref: PointCloud, test: PointCloud, component: str, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio of one color component, in dB.

    Both clouds must be YCbCr with identical geometry (lossless-geometry
    assumption). Identical clouds report math.inf.
    """
    chan = validation.check_component(component)
    validation.check_color_space(ref, "YCbCr8")
    validation.check_color_space(test, "YCbCr8")
    validation.check_same_geometry(ref, test)
    err = ref.colors[:, chan] - test.colors[:, chan]
    mse = float(np.mean(err * err))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def ycbcr_psnr(ref: PointCloud, test: PointCloud, weights=YCBCR_WEIGHTS) -> float:
    """Weighted combination of the component PSNRs, default 6:1:1."""
    parts = [psnr(ref, test, c) for c in validation.COMPONENTS]
    return sum(w * p for w, p in zip(weights, parts)) / sum(weights)


@dataclass(frozen=True)
class RDCurve:
    """Rate-distortion samples: bits per input point vs PSNR in dB."""

    points: tuple
    label: str = ""

    def __post_init__(self):
        pts = tuple((float(r), float(p)) for r, p in self.points)
        rates = [r for r, _ in pts]
        if any(r <= 0 for r in rates):
            raise InvalidArgument("bitrates must be positive")
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise InvalidArgument("bitrates must be strictly increasing")
        object.__setattr__(self, "points", pts)

    def usable(self):
        """Finite-PSNR points; infinite sentinels are excluded with a warning."""
        finite = [(r, p) for r, p in self.points if math.isfinite(p)]
        if len(finite) < len(self.points):
            warnings.warn(
                f"curve {self.label or '<unnamed>'}: dropped "
                f"{len(self.points) - len(finite)} infinite-PSNR point(s) from the fit",
                stacklevel=3,
            )
        return finite


def bd_psnr(anchor: RDCurve, test: RDCurve) -> float:
    """Average PSNR difference (test - anchor) at equal rate, in dB."""
    return _bd(anchor, test, rate_axis=False)


def bd_rate(anchor: RDCurve, test: RDCurve) -> float:
    """Average rate difference at equal PSNR, in percent.

    Negative means the test curve needs fewer bits for the same quality.
    """
    return _bd(anchor, test, rate_axis=True)


def bd_metric(anchor: RDCurve, test: RDCurve, mode: str) -> float:
    if mode == "bd_psnr":
        return bd_psnr(anchor, test)
    if mode == "bd_rate":
        return bd_rate(anchor, test)
    raise InvalidArgument(f"mode must be 'bd_psnr' or 'bd_rate', got {mode!r}")


def _bd(anchor: RDCurve, test: RDCurve, rate_axis: bool) -> float:
    """Classic Bjontegaard computation with a cubic fit.

    rate_axis=False fits PSNR as a function of log10(rate) and averages
    the PSNR gap; rate_axis=True fits log10(rate) against PSNR and
    converts the averaged log-rate gap to percent.
    """
    sets = []
    for curve in (anchor, test):
        pts = curve.usable()
        if len(pts) < MIN_BD_POINTS:
            raise InsufficientPoints(
                f"curve {curve.label or '<unnamed>'} has {len(pts)} usable points, "
                f"needs >= {MIN_BD_POINTS}"
            )
        log_rate = np.log10([r for r, _ in pts])
        quality = np.array([p for _, p in pts])
        sets.append((quality, log_rate) if rate_axis else (log_rate, quality))
    lo = max(xs.min() for xs, _ in sets)
    hi = min(xs.max() for xs, _ in sets)
    if not lo < hi:
        raise NoOverlap("curves do not overlap in the integration variable")
    means = []
    for xs, ys in sets:
        poly = np.polyfit(xs, ys, 3)
        integral = np.polyval(np.polyint(poly), hi) - np.polyval(np.polyint(poly), lo)
        means.append(integral / (hi - lo))
    delta = means[1] - means[0]
    if rate_axis:
        return (10.0 ** delta - 1.0) * 100.0
    return float(delta)


def read_rd_csv(path, label: str = "") -> RDCurve:
    """Two-column CSV (bits per input point, PSNR dB); '#' lines ignored."""
    points = []
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = [p for p in line.replace(",", " ").split() if p]
                if len(parts) != 2:
                    raise InvalidArgument(f"{path}:{lineno}: expected two columns")
                try:
                    points.append((float(parts[0]), float(parts[1])))
                except ValueError as exc:
                    raise InvalidArgument(f"{path}:{lineno}: non-numeric value") from exc
    except UnicodeDecodeError as exc:
        raise InvalidArgument(f"{path}: not a text file") from exc
    return RDCurve(points=tuple(points), label=label or str(path))
