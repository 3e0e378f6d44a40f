"""Edge-feature construction for per-point neighborhood graphs.

Each point is connected to itself (neighbor slot 0) and its k-1 nearest
neighbors. The edge feature of pair (i, j) concatenates the point's own
feature with the neighbor's offset: (f_i, f_j - f_i), giving every
downstream block both absolute and relative local information.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import IndexOutOfRange, ShapeMismatch


@dataclass(frozen=True)
class GraphFeature:
    """Per-point, per-neighbor edge tensor of shape (n, k, 2L)."""

    values: torch.Tensor
    neighbor_indices: torch.Tensor  # (n, k), column 0 = self
    source_channels: int


def build_edge_features(features: torch.Tensor, neighbor_indices: torch.Tensor) -> GraphFeature:
    """Edge tensor out[i, j] = concat(f_i, f_{idx(i,j)} - f_i).

    Differentiable with respect to `features`; used inside the training
    graph. Slot j=0 is the self loop, so out[i, 0] = (f_i, 0).
    """
    if features.ndim != 2:
        raise ShapeMismatch(f"features must be (n, L), got {tuple(features.shape)}")
    if neighbor_indices.ndim != 2 or neighbor_indices.shape[0] != features.shape[0]:
        raise ShapeMismatch(
            f"neighbor indices {tuple(neighbor_indices.shape)} do not match "
            f"features {tuple(features.shape)}"
        )
    n = features.shape[0]
    idx = neighbor_indices.long()
    if idx.numel() and (idx.min() < 0 or idx.max() >= n):
        raise IndexOutOfRange("neighbor indices fall outside the feature rows")
    center = features.unsqueeze(1).expand(-1, idx.shape[1], -1)
    neighbors = features[idx]
    values = torch.cat([center, neighbors - center], dim=-1)
    return GraphFeature(values=values, neighbor_indices=idx, source_channels=features.shape[1])


def gather_neighbors(x: torch.Tensor, idx: torch.Tensor) -> torch.Tensor:
    """Batched neighbor gather: (B, C, n) with (B, n, k) -> (B, C, n, k)."""
    B, C, n = x.shape
    k = idx.shape[-1]
    flat = x.permute(0, 2, 1).reshape(B * n, C)
    offset = torch.arange(B, device=x.device).view(B, 1, 1) * n
    gathered = flat[(idx + offset).reshape(-1)]
    return gathered.view(B, n, k, C).permute(0, 3, 1, 2)


def edge_features_batched(x: torch.Tensor, idx: torch.Tensor) -> torch.Tensor:
    """Channel-first batched edge features: (B, C, n) -> (B, 2C, n, k)."""
    neighbors = gather_neighbors(x, idx)
    center = x.unsqueeze(-1).expand_as(neighbors)
    return torch.cat([center, neighbors - center], dim=1)
