"""Scikit-learn style front door for the whole pipeline.

`PointCloudColorEnhancer` is a transformer: `fit` takes distorted
clouds (X) with their clean originals (y) and trains one network per
color component; `transform` enhances clouds. Hyperparameters follow
sklearn conventions (stored verbatim, introspectable via get_params),
so the estimator composes with pipelines and parameter search.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import validation
from .checkpoint import load_checkpoint, save_checkpoint
from .cloud import PointCloud
from .enhance import enhance
from .errors import InvalidArgument
from .network import NetConfig
from .train import TrainConfig, train


class PointCloudColorEnhancer(BaseEstimator, TransformerMixin):
    """Learnable post-filter for compressed point-cloud colors.

    Parameters mirror the training protocol: patch size `n`, neighbor
    count `k`, overlap ratio `r`, the per-stage network widths, and the
    optimizer schedule. After `fit`, `checkpoints_` holds one trained
    checkpoint per color component and `loss_history_` the per-epoch
    training losses.
    """

    def __init__(self, n=2048, k=20, r=2.0, epochs=180, batch_size=12,
                 base_lr=0.0016, lr_step=60, lr_factor=0.25, seed=0,
                 att1_head=16, att1_fusion=32, att2_head=64, att2_fusion=128,
                 conv1_width=64, conv2_width=256, skip1_width=64, skip2_width=256,
                 leaky_slope=0.2, distance_scale=1.0,
                 use_fr=True, fr_normals=True, fr_distance=True,
                 attention="parallel_serial", components=("Y", "Cb", "Cr"),
                 max_patches=None, workers=1):
        self.n = n
        self.k = k
        self.r = r
        self.epochs = epochs
        self.batch_size = batch_size
        self.base_lr = base_lr
        self.lr_step = lr_step
        self.lr_factor = lr_factor
        self.seed = seed
        self.att1_head = att1_head
        self.att1_fusion = att1_fusion
        self.att2_head = att2_head
        self.att2_fusion = att2_fusion
        self.conv1_width = conv1_width
        self.conv2_width = conv2_width
        self.skip1_width = skip1_width
        self.skip2_width = skip2_width
        self.leaky_slope = leaky_slope
        self.distance_scale = distance_scale
        self.use_fr = use_fr
        self.fr_normals = fr_normals
        self.fr_distance = fr_distance
        self.attention = attention
        self.components = components
        self.max_patches = max_patches
        self.workers = workers

    def _net_config(self) -> NetConfig:
        return NetConfig(
            n=self.n, k=self.k,
            att1_head=self.att1_head, att1_fusion=self.att1_fusion,
            att2_head=self.att2_head, att2_fusion=self.att2_fusion,
            conv1_width=self.conv1_width, conv2_width=self.conv2_width,
            skip1_width=self.skip1_width, skip2_width=self.skip2_width,
            leaky_slope=self.leaky_slope, distance_scale=self.distance_scale,
            use_fr=self.use_fr, fr_normals=self.fr_normals,
            fr_distance=self.fr_distance, attention=self.attention,
        )

    def _train_config(self, component: str) -> TrainConfig:
        return TrainConfig(
            component=component, epochs=self.epochs, batch_size=self.batch_size,
            base_lr=self.base_lr, lr_step=self.lr_step, lr_factor=self.lr_factor,
            n=self.n, r=self.r, k=self.k, seed=self.seed,
            max_patches=self.max_patches, net=self._net_config(),
        )

    def fit(self, X, y):
        """Train one network per component.

        X: distorted clouds; y: the matching clean clouds, same order,
        identical geometry.
        """
        X, y = _as_cloud_list(X, "X"), _as_cloud_list(y, "y")
        if len(X) != len(y):
            raise InvalidArgument(f"X has {len(X)} clouds, y has {len(y)}")
        pairs = [(clean, distorted) for clean, distorted in zip(y, X)]
        self.checkpoints_ = {}
        self.loss_history_ = {}
        for comp in self.components:
            validation.check_component(comp)
            ckpt = train(self._train_config(comp), pairs)
            self.checkpoints_[comp] = ckpt
            self.loss_history_[comp] = ckpt.metadata["loss_history"]
        return self

    def transform(self, X):
        """Enhance a cloud or a list of clouds."""
        if not hasattr(self, "checkpoints_"):
            raise NotFittedError("call fit() or load() before transform()")
        if isinstance(X, PointCloud):
            return enhance(self.checkpoints_, X, workers=self.workers)
        return [enhance(self.checkpoints_, pc, workers=self.workers) for pc in X]

    def save(self, prefix) -> dict:
        """Write one checkpoint file per component: <prefix>.<comp>.ckpt."""
        if not hasattr(self, "checkpoints_"):
            raise NotFittedError("nothing to save; fit() first")
        paths = {}
        for comp, ckpt in self.checkpoints_.items():
            path = f"{prefix}.{comp}.ckpt"
            save_checkpoint(ckpt, path)
            paths[comp] = path
        return paths

    def load(self, prefix) -> "PointCloudColorEnhancer":
        """Load checkpoints saved by save()."""
        self.checkpoints_ = {
            comp: load_checkpoint(f"{prefix}.{comp}.ckpt") for comp in self.components
        }
        self.loss_history_ = {
            comp: ckpt.metadata.get("loss_history", [])
            for comp, ckpt in self.checkpoints_.items()
        }
        return self


def _as_cloud_list(value, name: str) -> list[PointCloud]:
    if isinstance(value, PointCloud):
        return [value]
    clouds = list(value)
    for pc in clouds:
        if not isinstance(pc, PointCloud):
            raise InvalidArgument(f"{name} must contain PointCloud instances")
    return clouds
