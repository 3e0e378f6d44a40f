"""Graph-attention post-filter for compressed point-cloud color attributes.

The package splits a decoded cloud into overlapping fixed-size patches,
runs a per-component graph-attention network over each patch, fuses the
patches back by averaging, and measures quality with PSNR and
Bjontegaard metrics. `PointCloudColorEnhancer` is the high-level
fit/transform entry point; the submodules expose every stage directly.
"""

from .cloud import RGB8, YCBCR8, PointCloud, rgb_to_ycbcr, ycbcr_to_rgb
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .distortion import DistortionLevel, make_pairs
from .enhance import enhance
from .estimator import PointCloudColorEnhancer
from .metrics import RDCurve, bd_psnr, bd_rate, psnr, ycbcr_psnr
from .network import ColorEnhancementNet, NetConfig, build_model
from .patches import PatchSet, extract_patches, fuse_patches
from .ply import read_ply, write_ply
from .train import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "RGB8",
    "YCBCR8",
    "PointCloud",
    "rgb_to_ycbcr",
    "ycbcr_to_rgb",
    "Checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "DistortionLevel",
    "make_pairs",
    "enhance",
    "PointCloudColorEnhancer",
    "RDCurve",
    "bd_psnr",
    "bd_rate",
    "psnr",
    "ycbcr_psnr",
    "ColorEnhancementNet",
    "NetConfig",
    "build_model",
    "PatchSet",
    "extract_patches",
    "fuse_patches",
    "read_ply",
    "write_ply",
    "TrainConfig",
    "train",
    "__version__",
]
