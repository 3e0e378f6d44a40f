"""Whole-cloud enhancement: patch, run each component network, fuse.

Patch geometry (neighbors, distance weights, normals) is computed once
per patch and shared by the three component networks. Patches are
independent at inference time, so their forward passes can be spread
over a thread pool; results are identical for any worker count because
the batch partition is fixed and fusion runs in patch order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import torch

from . import validation
from .checkpoint import Checkpoint, load_checkpoint, model_from_checkpoint
from .cloud import RGB8, PointCloud, rgb_to_ycbcr, ycbcr_to_rgb
from .errors import ConfigMismatch, MissingCheckpoint
from .network import PatchGeometry, batch_geometry
from .patches import extract_patches, fuse_patches

DEFAULT_BATCH = 8


def _coerce_checkpoints(checkpoints) -> dict[str, Checkpoint]:
    out = {}
    for comp in validation.COMPONENTS:
        if comp not in checkpoints or checkpoints[comp] is None:
            raise MissingCheckpoint(f"no checkpoint for component {comp}")
        ckpt = checkpoints[comp]
        if not isinstance(ckpt, Checkpoint):
            ckpt = load_checkpoint(ckpt)
        out[comp] = ckpt
    return out


def _shared_settings(ckpts: dict[str, Checkpoint]):
    """All three checkpoints must agree on patching and geometry settings."""
    keys = []
    for comp, ckpt in ckpts.items():
        cfg = ckpt.config
        keys.append((cfg.n, cfg.k, cfg.distance_scale, float(ckpt.metadata.get("r", 2.0))))
    if len(set(keys)) != 1:
        raise ConfigMismatch(f"checkpoints disagree on (n, k, distance_scale, r): {keys}")
    return keys[0]


def enhance(checkpoints, cloud: PointCloud, workers: int = 1,
            batch_size: int = DEFAULT_BATCH) -> PointCloud:
    """Restore the colors of a decoded cloud with per-component networks.

    `checkpoints` maps component name (Y, Cb, Cr) to a Checkpoint or a
    checkpoint path. The output keeps the input's color space and its
    exact coordinates; points not covered by any patch keep their
    decoded color.
    """
    ckpts = _coerce_checkpoints(checkpoints)
    n, k, scale, r = _shared_settings(ckpts)
    was_rgb = cloud.color_space == RGB8
    work = rgb_to_ycbcr(cloud) if was_rgb else cloud

    ps = extract_patches(work, n, r)
    geometries = [
        PatchGeometry.from_coords(work.coords[row], k, scale) for row in ps.indices
    ]
    idx_all, w_all, nrm_all = batch_geometry(geometries)

    fused = work
    for comp in validation.COMPONENTS:
        model = model_from_checkpoint(ckpts[comp])
        chan = validation.COMPONENT_INDEX[comp]
        colors = fused.colors[ps.indices, chan] / 255.0       # (m, n)
        colors_t = torch.from_numpy(colors.astype(np.float32)).unsqueeze(1)
        out = np.empty_like(colors)
        spans = [(lo, min(lo + batch_size, ps.m)) for lo in range(0, ps.m, batch_size)]

        def run(span, _model=model, _colors=colors_t, _out=out):
            lo, hi = span
            with torch.no_grad():
                res = _model(_colors[lo:hi], idx_all[lo:hi], w_all[lo:hi], nrm_all[lo:hi])
            _out[lo:hi] = res.squeeze(1).numpy().astype(np.float64) * 255.0

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(run, spans))
        else:
            for span in spans:
                run(span)
        fused = fuse_patches(fused, ps, out, comp)
    return ycbcr_to_rgb(fused) if was_rgb else fused
