"""Shared test utilities: cloud builders and gradient-check oracles."""

from __future__ import annotations

import numpy as np
import torch

from pcqe.cloud import RGB8, YCBCR8, PointCloud


def make_random_cloud(n_points, seed=0, bitdepth=6, color_space=RGB8):
    """Cloud with unique random voxel coordinates and uniform random colors."""
    rng = np.random.default_rng(seed)
    coords = _unique_voxels(n_points, rng, bitdepth)
    colors = rng.integers(0, 256, size=(n_points, 3)).astype(np.float64)
    return PointCloud(coords, colors, color_space, bitdepth)


def make_textured_cloud(n_points, seed=0, bitdepth=6, color_space=YCBCR8):
    """Cloud whose colors follow a smooth low-frequency field plus noise.

    Spatially correlated texture gives neighborhood-based enhancement
    something to learn, unlike white-noise colors.
    """
    rng = np.random.default_rng(seed)
    coords = _unique_voxels(n_points, rng, bitdepth)
    pos = coords / float(2 ** bitdepth) * 2.0 * np.pi
    colors = np.empty((n_points, 3))
    for chan in range(3):
        freqs = rng.uniform(0.5, 3.0, size=(3, 3))
        phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
        amps = rng.uniform(20.0, 45.0, size=3)
        field = sum(a * np.cos(pos @ f + p) for a, f, p in zip(amps, freqs, phases))
        colors[:, chan] = field
    colors += rng.normal(0.0, 2.0, size=colors.shape)
    colors = np.clip(127.5 + colors, 0.0, 255.0)
    return PointCloud(coords, colors, color_space, bitdepth)


def _unique_voxels(n_points, rng, bitdepth):
    size = 2 ** bitdepth
    if n_points > size ** 3:
        raise ValueError("cannot place that many unique voxels")
    flat = rng.choice(size ** 3, size=n_points, replace=False)
    x, y, z = np.unravel_index(flat, (size, size, size))
    return np.stack([x, y, z], axis=1).astype(np.int64)


def make_surface_cloud(side, seed=0, bitdepth=6):
    """Voxelized height-field surface with shading-driven colors.

    side*side points at unit spacing, z from a smooth random height
    field. Colors combine a low-frequency texture with Lambertian-style
    shading from the analytic surface normal, so both neighbor distance
    and normal direction genuinely carry color information (the texture
    of scanned objects, unlike volumetric noise).
    """
    rng = np.random.default_rng(seed)
    size = 2 ** bitdepth
    xs, ys = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    u = xs / side * 2.0 * np.pi
    v = ys / side * 2.0 * np.pi
    height = np.zeros_like(u, dtype=np.float64)
    for _ in range(3):
        fu, fv = rng.uniform(0.5, 2.5, size=2)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        height += rng.uniform(4.0, 10.0) * np.sin(fu * u + fv * v + phase)
    z = np.clip(np.round(height - height.min()), 0, size - 1).astype(np.int64)
    coords = np.stack([xs.ravel(), ys.ravel(), z.ravel()], axis=1).astype(np.int64)

    gx, gy = np.gradient(height)
    normal = np.stack([-gx, -gy, np.ones_like(gx)], axis=-1)
    normal /= np.linalg.norm(normal, axis=-1, keepdims=True)
    light = np.array([0.4, 0.25, 0.88])
    light /= np.linalg.norm(light)
    shade = np.clip(normal @ light, 0.0, 1.0)

    colors = np.empty((side * side, 3))
    for chan in range(3):
        fu, fv = rng.uniform(0.5, 3.0, size=2)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        base = 0.5 + 0.5 * np.sin(fu * u + fv * v + phase)
        colors[:, chan] = ((30.0 + 100.0 * base) * (0.15 + 0.85 * shade)).ravel()
    colors += rng.normal(0.0, 1.5, size=colors.shape)
    return PointCloud(coords, np.clip(colors, 0.0, 255.0), YCBCR8, bitdepth)


def make_grid_cloud(nx, ny, nz, color=128.0, color_space=YCBCR8):
    """Uniform integer grid with constant colors."""
    xs, ys, zs = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    coords = np.stack([xs.ravel(), ys.ravel(), zs.ravel()], axis=1).astype(np.int64)
    colors = np.full((coords.shape[0], 3), color, dtype=np.float64)
    bitdepth = max(1, int(max(nx, ny, nz) - 1).bit_length())
    return PointCloud(coords, colors, color_space, bitdepth)


# --- finite-difference oracle -----------------------------------------------

def finite_difference(fn, tensors, h=1e-5):
    """Central-difference gradients of scalar fn() wrt each float64 tensor."""
    grads = []
    for t in tensors:
        grad = torch.zeros_like(t)
        flat, gflat = t.view(-1), grad.view(-1)
        for i in range(flat.numel()):
            with torch.no_grad():
                orig = flat[i].item()
                flat[i] = orig + h
                up = float(fn())
                flat[i] = orig - h
                down = float(fn())
                flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(grad)
    return grads


def sampled_finite_difference(fn, tensor, positions, h=1e-5):
    """Central differences at selected flat positions of one tensor."""
    flat = tensor.view(-1)
    out = []
    for i in positions:
        with torch.no_grad():
            orig = flat[i].item()
            flat[i] = orig + h
            up = float(fn())
            flat[i] = orig - h
            down = float(fn())
            flat[i] = orig
        out.append((up - down) / (2.0 * h))
    return torch.tensor(out, dtype=tensor.dtype)


def rel_error(approx: torch.Tensor, exact: torch.Tensor) -> float:
    """Max absolute difference scaled by the larger gradient magnitude."""
    approx = approx.reshape(-1).double()
    exact = exact.reshape(-1).double()
    scale = max(float(exact.abs().max()), float(approx.abs().max()), 1e-6)
    return float((approx - exact).abs().max()) / scale


def random_weighting(shape, seed=0, dtype=torch.float64):
    """Fixed random projection used to turn tensor outputs into scalars."""
    gen = torch.Generator().manual_seed(seed)
    return torch.randn(shape, generator=gen, dtype=dtype)
