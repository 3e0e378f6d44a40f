"""Graph-attention network for per-patch color enhancement.

One network processes one color component of one patch: the input is
the distorted component (normalized to [0, 1]) plus the patch geometry,
the output is the restored component. The architecture interleaves
neighborhood attention, geometry-driven feature refinement and graph
convolution blocks, merges skip connections from the attention graph
features, and adds a residual so a zero-initialized head is an exact
identity.

All blocks operate channel-first on batched patches: per-point tensors
are (B, C, n), per-edge tensors are (B, C, n, k).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .errors import ConfigError, ShapeMismatch
from .geometry import distance_weights, estimate_normals
from .graph import edge_features_batched
from .patches import knn_indices

ATTENTION_MODES = ("parallel_serial", "parallel4")


@dataclass(frozen=True)
class NetConfig:
    """Architecture and geometry hyperparameters of one component network."""

    n: int = 2048
    k: int = 20
    att1_head: int = 16
    att1_fusion: int = 32
    att2_head: int = 64
    att2_fusion: int = 128
    conv1_width: int = 64
    conv2_width: int = 256
    skip1_width: int = 64
    skip2_width: int = 256
    leaky_slope: float = 0.2
    distance_scale: float = 1.0
    use_fr: bool = True
    fr_normals: bool = True
    fr_distance: bool = True
    attention: str = "parallel_serial"

    @property
    def att1_total(self) -> int:
        return 2 * self.att1_head + self.att1_fusion

    @property
    def att2_total(self) -> int:
        return 2 * self.att2_head + self.att2_fusion

    def validate(self) -> None:
        for name in ("n", "k", "att1_head", "att1_fusion", "att2_head", "att2_fusion",
                     "conv1_width", "conv2_width", "skip1_width", "skip2_width"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.k > self.n:
            raise ConfigError(f"k ({self.k}) cannot exceed patch size n ({self.n})")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ConfigError(f"leaky_slope must be in (0, 1), got {self.leaky_slope}")
        if self.distance_scale <= 0:
            raise ConfigError(f"distance_scale must be > 0, got {self.distance_scale}")
        if self.attention not in ATTENTION_MODES:
            raise ConfigError(f"attention must be one of {ATTENTION_MODES}")
        if self.attention == "parallel4":
            for total, tag in ((self.att1_total, "att1"), (self.att2_total, "att2")):
                if total % 4:
                    raise ConfigError(f"parallel4 needs {tag} total width divisible by 4")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "NetConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class PatchGeometry:
    """Static per-patch geometry shared by all network blocks."""

    neighbor_indices: np.ndarray  # (n, k) int64, column 0 = self
    weights: np.ndarray           # (n, k) distance weights in (0, 1]
    normals: np.ndarray           # (n, 3) unit normals

    @classmethod
    def from_coords(cls, coords, k: int, distance_scale: float = 1.0) -> "PatchGeometry":
        coords = np.asarray(coords, dtype=np.float64)
        idx = knn_indices(coords, np.arange(coords.shape[0]), k)
        return cls(
            neighbor_indices=idx,
            weights=distance_weights(coords, idx, distance_scale),
            normals=estimate_normals(coords, k, neighbor_indices=idx),
        )


def batch_geometry(geometries, device=None, dtype=torch.float32):
    """Stack per-patch geometry into (idx, weights, normals) batch tensors."""
    idx = torch.from_numpy(np.stack([g.neighbor_indices for g in geometries])).to(device)
    w = torch.from_numpy(np.stack([g.weights for g in geometries])).to(device, dtype)
    nrm = torch.from_numpy(np.stack([g.normals for g in geometries])).to(device, dtype)
    return idx, w.unsqueeze(1), nrm.permute(0, 2, 1)


class _ConvBlock(nn.Module):
    """Pointwise conv + batch norm + leaky ReLU."""

    def __init__(self, cin: int, cout: int, slope: float):
        super().__init__()
        self.conv = nn.Conv2d(cin, cout, 1)
        self.bn = nn.BatchNorm2d(cout)
        self.slope = slope

    def forward(self, x):
        return F.leaky_relu(self.bn(self.conv(x)), self.slope)


class GraphConvBlock(nn.Module):
    """Three pointwise conv blocks in series, then neighbor max-pooling.

    Input (B, cin, n, k) edge features; output (B, cout, n) with the
    strongest neighbor response kept per channel.
    """

    def __init__(self, cin: int, cout: int, slope: float = 0.2):
        super().__init__()
        self.blocks = nn.Sequential(
            _ConvBlock(cin, cout, slope),
            _ConvBlock(cout, cout, slope),
            _ConvBlock(cout, cout, slope),
        )

    def forward(self, x):
        if x.ndim != 4:
            raise ShapeMismatch(f"expected (B, C, n, k) edge features, got {tuple(x.shape)}")
        return self.blocks(x).max(dim=-1).values


class AttentionHead(nn.Module):
    """Single-head neighborhood attention over edge features.

    Two projection branches lift the edge features to `cout` channels;
    each is compressed to one channel (no activation), the logits are
    summed, passed through a leaky ReLU and soft-maxed across the k
    neighbors. The head returns both the attention-weighted feature and
    the raw projected graph feature.
    """

    def __init__(self, cin: int, cout: int, slope: float):
        super().__init__()
        self.project = _ConvBlock(2 * cin, cout, slope)
        self.project_score = _ConvBlock(2 * cin, cout, slope)
        self.compress = nn.Conv2d(cout, 1, 1)
        self.compress_score = nn.Conv2d(cout, 1, 1)
        self.slope = slope

    def forward(self, edge):
        graph = self.project(edge)                       # (B, cout, n, k)
        side = self.project_score(edge)
        logits = F.leaky_relu(self.compress(graph) + self.compress_score(side), self.slope)
        attn = torch.softmax(logits, dim=-1)             # rows over neighbors
        attended = (graph * attn).sum(dim=-1)            # (B, cout, n)
        return attended, graph


class MultiHeadAttention(nn.Module):
    """Multi-head neighborhood attention.

    parallel_serial: two heads run on the input's edge features, a third
    fusion head runs on the edge features of their concatenated outputs;
    all three attention outputs (and graph features) are concatenated.
    parallel4: four independent quarter-width heads, concatenated.
    """

    def __init__(self, cin: int, head_width: int, fusion_width: int,
                 slope: float, mode: str = "parallel_serial"):
        super().__init__()
        self.mode = mode
        self.out_channels = 2 * head_width + fusion_width
        if mode == "parallel_serial":
            self.head_a = AttentionHead(cin, head_width, slope)
            self.head_b = AttentionHead(cin, head_width, slope)
            self.fusion = AttentionHead(2 * head_width, fusion_width, slope)
        elif mode == "parallel4":
            if self.out_channels % 4:
                raise ConfigError("parallel4 needs a total width divisible by 4")
            quarter = self.out_channels // 4
            self.heads = nn.ModuleList(AttentionHead(cin, quarter, slope) for _ in range(4))
        else:
            raise ConfigError(f"attention must be one of {ATTENTION_MODES}")

    def forward(self, x, idx):
        edge = edge_features_batched(x, idx)
        if self.mode == "parallel_serial":
            att_a, graph_a = self.head_a(edge)
            att_b, graph_b = self.head_b(edge)
            fused_edge = edge_features_batched(torch.cat([att_a, att_b], dim=1), idx)
            att_c, graph_c = self.fusion(fused_edge)
            attended = torch.cat([att_a, att_b, att_c], dim=1)
            graph = torch.cat([graph_a, graph_b, graph_c], dim=1)
        else:
            outs = [head(edge) for head in self.heads]
            attended = torch.cat([o[0] for o in outs], dim=1)
            graph = torch.cat([o[1] for o in outs], dim=1)
        return attended, graph


class FeatureRefiner(nn.Module):
    """Geometry-aware edge features: append normals, weight by distance.

    Parameter-free. With both switches off this is plain edge-feature
    construction of the input.
    """

    def __init__(self, use_normals: bool, use_distance: bool):
        super().__init__()
        self.use_normals = use_normals
        self.use_distance = use_distance

    @staticmethod
    def out_channels(cin: int, use_normals: bool) -> int:
        return 2 * (cin + 3) if use_normals else 2 * cin

    def forward(self, x, idx, normals, weights):
        if self.use_normals:
            x = torch.cat([x, normals], dim=1)
        edge = edge_features_batched(x, idx)
        if self.use_distance:
            edge = edge * weights
        return edge


class ColorEnhancementNet(nn.Module):
    """Full per-component enhancement network with residual output."""

    def __init__(self, config: NetConfig):
        super().__init__()
        config.validate()
        self.config = config
        slope = config.leaky_slope
        use_normals = config.use_fr and config.fr_normals
        use_distance = config.use_fr and config.fr_distance

        self.att1 = MultiHeadAttention(1, config.att1_head, config.att1_fusion,
                                       slope, config.attention)
        self.att2 = MultiHeadAttention(config.conv1_width, config.att2_head,
                                       config.att2_fusion, slope, config.attention)
        self.refine = FeatureRefiner(use_normals, use_distance)

        fr1_in = 1 + self.att1.out_channels
        fr2_in = config.conv1_width + self.att2.out_channels
        self.conv1 = GraphConvBlock(
            FeatureRefiner.out_channels(fr1_in, use_normals), config.conv1_width, slope)
        self.conv2 = GraphConvBlock(
            FeatureRefiner.out_channels(fr2_in, use_normals), config.conv2_width, slope)
        self.skip1 = GraphConvBlock(self.att1.out_channels, config.skip1_width, slope)
        self.skip2 = GraphConvBlock(self.att2.out_channels, config.skip2_width, slope)
        merged = config.conv2_width + config.skip1_width + config.skip2_width
        self.head = nn.Conv1d(merged, 1, 1)

    def forward(self, color, idx, weights, normals):
        """color (B, 1, n) in [0, 1]; returns the restored component, same shape."""
        if color.ndim != 3 or color.shape[1] != 1:
            raise ShapeMismatch(f"color must be (B, 1, n), got {tuple(color.shape)}")
        att_1, graph_1 = self.att1(color, idx)
        refined_1 = self.refine(torch.cat([color, att_1], dim=1), idx, normals, weights)
        feat_1 = self.conv1(refined_1)
        att_2, graph_2 = self.att2(feat_1, idx)
        refined_2 = self.refine(torch.cat([feat_1, att_2], dim=1), idx, normals, weights)
        feat_2 = self.conv2(refined_2)
        skip_a = self.skip1(graph_1)
        skip_b = self.skip2(graph_2)
        merged = torch.cat([feat_2, skip_a, skip_b], dim=1)
        return color + self.head(merged)


def init_weights(model: ColorEnhancementNet, seed: int) -> None:
    """Deterministic init: uniform(+-1/sqrt(cin)) convs, zeroed output head.

    Zeroing the head makes a fresh network the exact identity map, so
    training starts from the residual baseline.
    """
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, (nn.Conv2d, nn.Conv1d)):
                bound = 1.0 / math.sqrt(module.in_channels)
                module.weight.uniform_(-bound, bound, generator=gen)
                module.bias.uniform_(-bound, bound, generator=gen)
            elif isinstance(module, nn.BatchNorm2d):
                module.weight.fill_(1.0)
                module.bias.zero_()
                module.reset_running_stats()
        model.head.weight.zero_()
        model.head.bias.zero_()


def build_model(config: NetConfig, seed: int = 0) -> ColorEnhancementNet:
    model = ColorEnhancementNet(config)
    init_weights(model, seed)
    return model


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def forward_patch(model: ColorEnhancementNet, color01, coords, mode: str = "eval") -> np.ndarray:
    """Run one patch through the network.

    color01: (n,) component values normalized to [0, 1]; coords: (n, 3)
    raw voxel positions. Geometry (neighbors, weights, normals) is
    computed here once and shared by every block.
    """
    cfg = model.config
    geometry = PatchGeometry.from_coords(coords, cfg.k, cfg.distance_scale)
    dtype = next(model.parameters()).dtype
    idx, w, nrm = batch_geometry([geometry], dtype=dtype)
    color = torch.as_tensor(np.asarray(color01), dtype=dtype).view(1, 1, -1)
    was_training = model.training
    model.train(mode == "train")
    try:
        if mode == "train":
            out = model(color, idx, w, nrm)
        else:
            with torch.no_grad():
                out = model(color, idx, w, nrm)
    finally:
        model.train(was_training)
    return out.detach().view(-1).numpy()
