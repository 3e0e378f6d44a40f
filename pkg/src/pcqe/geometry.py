"""Per-point geometric descriptors: PCA normals and distance weights.

Geometry is static inside a patch, so both quantities are computed once
per patch with numpy and fed to the network as constants.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import DegenerateNeighborhood, InvalidArgument
from .patches import knn_indices

DEGENERATE_TRACE = 1e-12


def estimate_normals(coords, k: int, neighbor_indices=None) -> np.ndarray:
    """Unit surface normals from the k-neighborhood covariance.

    The normal of a point is the eigenvector of the smallest eigenvalue
    of its neighborhood covariance matrix. Signs are canonicalized by
    flipping so the largest-magnitude coordinate is positive (z
    preferred over y over x on ties). Degenerate neighborhoods (all
    points coincident) get (0, 0, 1) and a warning.
    """
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    if k < 3:
        raise InvalidArgument(f"normal estimation needs k >= 3, got {k}")
    if neighbor_indices is None:
        neighbor_indices = knn_indices(coords, np.arange(n), min(k, n))
    pts = coords[neighbor_indices]                      # (n, k, 3)
    centered = pts - pts.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / neighbor_indices.shape[1]
    degenerate = np.einsum("nii->n", cov) < DEGENERATE_TRACE
    _, vecs = np.linalg.eigh(cov)                       # eigenvalues ascending
    normals = vecs[:, :, 0]
    normals = _canonical_sign(normals)
    if degenerate.any():
        warnings.warn(
            f"{int(degenerate.sum())} degenerate neighborhood(s); using (0, 0, 1)",
            DegenerateNeighborhood,
            stacklevel=2,
        )
        normals[degenerate] = (0.0, 0.0, 1.0)
    return normals


def _canonical_sign(normals: np.ndarray) -> np.ndarray:
    # Pick the largest-|v| component, preferring z, then y, then x on ties,
    # and flip the vector so that component is positive.
    mags = np.abs(normals)
    pick = 2 - np.argmax(mags[:, ::-1], axis=1)  # reversed scan makes z win ties
    signs = np.sign(normals[np.arange(normals.shape[0]), pick])
    signs[signs == 0.0] = 1.0
    return normals * signs[:, None]


def distance_weights(coords, neighbor_indices, scale: float = 1.0) -> np.ndarray:
    """Neighbor weights w = 2 * (1 - sigmoid(scale * distance)), in (0, 1].

    The self slot gets exactly 1 (distance 0); far neighbors decay
    toward 0, de-emphasizing structurally unrelated points.
    """
    if scale <= 0:
        raise InvalidArgument(f"distance scale must be > 0, got {scale}")
    coords = np.asarray(coords, dtype=np.float64)
    neighbor_indices = np.asarray(neighbor_indices, dtype=np.int64)
    diff = coords[neighbor_indices] - coords[:, None, :]
    d = scale * np.sqrt((diff ** 2).sum(axis=-1))
    with np.errstate(over="ignore"):  # exp overflow -> weight 0, which is correct
        return 2.0 / (np.exp(d) + 1.0)
