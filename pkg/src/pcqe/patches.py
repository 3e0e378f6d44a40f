"""Patch extraction and fusion.

A cloud is split into m = ceil(N*r/n) overlapping patches: farthest
point sampling picks m key points, each patch is a key point plus its
n-1 nearest neighbors. Fusion averages per-point values over every
patch that covers the point; uncovered points keep their decoded color.

All neighbor searches are exact. Ties in distance are broken by
ascending point index so results are deterministic and reproducible
across platforms.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import validation
from .cloud import PointCloud
from .errors import InvalidArgument, ShapeMismatch

MANIFEST_MAGIC = b"PCQM"
MANIFEST_VERSION = 1


@dataclass(frozen=True)
class PatchSet:
    """Index maps of m patches of exactly n points each.

    indices[i, 0] is patch i's key point; the remaining columns are its
    nearest neighbors in ascending (distance, index) order.
    """

    indices: np.ndarray  # (m, n) int64 into the parent cloud
    n: int
    r: float
    parent_size: int

    def __post_init__(self):
        idx = np.ascontiguousarray(np.asarray(self.indices, dtype=np.int64))
        if idx.ndim != 2 or idx.shape[1] != self.n:
            raise ShapeMismatch(f"indices must be (m, {self.n}), got {idx.shape}")
        if idx.size and (idx.min() < 0 or idx.max() >= self.parent_size):
            raise InvalidArgument("patch indices fall outside the parent cloud")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def m(self) -> int:
        return self.indices.shape[0]

    def covered_mask(self) -> np.ndarray:
        """Boolean mask over the parent cloud: True where some patch covers."""
        mask = np.zeros(self.parent_size, dtype=bool)
        mask[self.indices.ravel()] = True
        return mask


def patch_count(N: int, r: float, n: int) -> int:
    """Number of patches, ceil(N*r/n); the ceiling keeps coverage at or
    above the requested overlap ratio."""
    if n < 1:
        raise InvalidArgument(f"patch size must be >= 1, got {n}")
    if N < n:
        raise InvalidArgument(f"cloud has {N} points, fewer than patch size {n}")
    if r <= 0:
        raise InvalidArgument(f"overlap ratio must be > 0, got {r}")
    return math.ceil(N * r / n)


def farthest_point_sample(coords, m: int, start: int = 0) -> np.ndarray:
    """Greedy max-min sampling of m point indices.

    The first pick is `start`; each next pick maximizes the minimum
    squared distance to the selected set, lowest index winning ties.
    """
    coords = np.asarray(coords, dtype=np.float64)
    N = coords.shape[0]
    if not 1 <= m <= N:
        raise InvalidArgument(f"m must be in [1, {N}], got {m}")
    if not 0 <= start < N:
        raise InvalidArgument(f"start must be in [0, {N}), got {start}")
    selected = np.empty(m, dtype=np.int64)
    selected[0] = start
    min_sq = ((coords - coords[start]) ** 2).sum(axis=1)
    for i in range(1, m):
        nxt = int(np.argmax(min_sq))  # argmax returns the lowest tied index
        selected[i] = nxt
        np.minimum(min_sq, ((coords - coords[nxt]) ** 2).sum(axis=1), out=min_sq)
    return selected


def knn_indices(coords, queries, k: int, chunk: int = 32) -> np.ndarray:
    """Exact k nearest neighbors for each query index, self included.

    Row q lists the k nearest cloud points to point queries[q], ordered
    by ascending (distance, index). Column 0 is therefore the query
    itself. Queries are processed in fixed-size chunks to bound memory.
    """
    coords = np.asarray(coords, dtype=np.float64)
    N = coords.shape[0]
    queries = np.atleast_1d(np.asarray(queries, dtype=np.int64))
    if k < 1 or k > N:
        raise InvalidArgument(f"k must be in [1, {N}], got {k}")
    if queries.size and (queries.min() < 0 or queries.max() >= N):
        raise InvalidArgument("query indices fall outside the cloud")
    out = np.empty((queries.shape[0], k), dtype=np.int64)
    for lo in range(0, queries.shape[0], chunk):
        q = queries[lo:lo + chunk]
        d2 = ((coords[q, None, :] - coords[None, :, :]) ** 2).sum(axis=-1)
        for row, dist in enumerate(d2):
            out[lo + row] = _smallest_k(dist, k)
    return out


def _smallest_k(dist: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest entries under (distance, index) order."""
    if k == dist.shape[0]:
        cand = np.arange(dist.shape[0])
    else:
        kth = np.partition(dist, k - 1)[k - 1]
        cand = np.flatnonzero(dist <= kth)
    order = np.lexsort((cand, dist[cand]))
    return cand[order[:k]]


def extract_patches(pc: PointCloud, n: int, r: float, start: int = 0) -> PatchSet:
    """FPS key points plus kNN groups of size n."""
    N = len(pc)
    m = patch_count(N, r, n)
    keys = farthest_point_sample(pc.coords, m, start)
    indices = knn_indices(pc.coords, keys, n)
    return PatchSet(indices=indices, n=n, r=float(r), parent_size=N)


def sequential_patches(pc: PointCloud, n: int) -> PatchSet:
    """Alternative patching: ceil(N/n) fixed-size runs in Morton order.

    Patches are disjoint except the last, which re-uses the final points
    of the ordering when n does not divide N (every patch must hold
    exactly n points).
    """
    N = len(pc)
    if N < n:
        raise InvalidArgument(f"cloud has {N} points, fewer than patch size {n}")
    order = np.argsort(_morton_codes(pc.coords), kind="stable")
    m = math.ceil(N / n)
    rows = [order[i * n:(i + 1) * n] for i in range(m - 1)]
    rows.append(order[N - n:])
    return PatchSet(indices=np.stack(rows), n=n, r=float(n * m) / N, parent_size=N)


def _morton_codes(coords: np.ndarray) -> np.ndarray:
    c = np.asarray(coords, dtype=np.uint64)
    bits = max(1, int(np.max(coords)).bit_length()) if coords.size else 1
    if bits > 21:
        raise InvalidArgument("Morton ordering supports coordinates up to 21 bits")
    code = np.zeros(c.shape[0], dtype=np.uint64)
    for b in range(bits):
        for axis in range(3):
            code |= ((c[:, axis] >> np.uint64(b)) & np.uint64(1)) << np.uint64(3 * b + (2 - axis))
    return code


def fuse_patches(pc: PointCloud, ps: PatchSet, enhanced, component: str) -> PointCloud:
    """Write per-patch enhanced values of one component back to the cloud.

    Points covered by several patches get the mean of their values
    (accumulated in ascending patch order); uncovered points keep their
    decoded color. The fused channel is clamped to [0, 255].
    """
    chan = validation.check_component(component)
    values = np.asarray(enhanced, dtype=np.float64)
    if values.ndim == 3 and values.shape[2] == 1:
        values = values[:, :, 0]
    if values.shape != ps.indices.shape:
        raise ShapeMismatch(
            f"enhanced values {values.shape} do not match patch set {ps.indices.shape}"
        )
    if ps.parent_size != len(pc):
        raise ShapeMismatch("patch set does not belong to this cloud")
    sums = np.zeros(len(pc), dtype=np.float64)
    counts = np.zeros(len(pc), dtype=np.int64)
    flat_idx = ps.indices.ravel()
    np.add.at(sums, flat_idx, values.ravel())
    np.add.at(counts, flat_idx, 1)
    colors = pc.colors.copy()
    covered = counts > 0
    colors[covered, chan] = np.clip(sums[covered] / counts[covered], 0.0, 255.0)
    return pc.with_colors(colors)


def save_manifest(ps: PatchSet, path, k: int = 0) -> None:
    """Binary patch manifest: counts header plus the raw index arrays."""
    header = struct.pack(
        "<4sIIIQdI",
        MANIFEST_MAGIC, MANIFEST_VERSION, ps.m, ps.n, ps.parent_size, ps.r, k,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(ps.indices.astype("<i8").tobytes())


def load_manifest(path) -> tuple[PatchSet, int]:
    """Read a manifest written by save_manifest; returns (patch set, k)."""
    head_size = struct.calcsize("<4sIIIQdI")
    with open(path, "rb") as fh:
        head = fh.read(head_size)
        if len(head) < head_size:
            raise InvalidArgument("manifest header is truncated")
        magic, version, m, n, parent, r, k = struct.unpack("<4sIIIQdI", head)
        if magic != MANIFEST_MAGIC:
            raise InvalidArgument("not a patch manifest")
        if version != MANIFEST_VERSION:
            raise InvalidArgument(f"unsupported manifest version {version}")
        raw = fh.read(m * n * 8)
        if len(raw) < m * n * 8:
            raise InvalidArgument("manifest index data is truncated")
        indices = np.frombuffer(raw, dtype="<i8").reshape(m, n)
    return PatchSet(indices=indices, n=n, r=r, parent_size=parent), k
