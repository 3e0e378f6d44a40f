"""Training orchestration for per-component enhancement networks.

A training run consumes (clean, distorted) cloud pairs with identical
geometry, cuts the distorted clouds into patches, and fits one network
to map the distorted component back to the clean one (MSE loss on
colors normalized to [0, 1]). Runs are fully deterministic given the
seed: patch order, weight init and optimizer state depend on nothing
else.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import torch

from . import ops, validation
from .checkpoint import Checkpoint, checkpoint_from_model, save_checkpoint
from .cloud import RGB8, PointCloud, rgb_to_ycbcr
from .distortion import DistortedPair
from .errors import EmptyDataset
from .network import NetConfig, PatchGeometry, batch_geometry, build_model
from .patches import extract_patches

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one component training run."""

    component: str = "Y"
    epochs: int = 180
    batch_size: int = 12
    base_lr: float = 0.0016
    lr_step: int = 60
    lr_factor: float = 0.25
    n: int = 2048
    r: float = 2.0
    k: int = 20
    seed: int = 0
    max_patches: int | None = None
    checkpoint_out: str | None = None
    net: NetConfig = field(default_factory=NetConfig)

    def __post_init__(self):
        validation.check_component(self.component)
        for name in ("epochs", "batch_size", "lr_step", "n", "k"):
            validation.check_positive(name, getattr(self, name))
        for name in ("base_lr", "lr_factor", "r"):
            validation.check_positive(name, getattr(self, name))

    def resolved_net(self) -> NetConfig:
        """Network config with the run's patch size and neighbor count."""
        cfg = replace(self.net, n=self.n, k=self.k)
        cfg.validate()
        return cfg


@dataclass
class PatchDataset:
    """Flattened training patches from any number of cloud pairs."""

    inputs: np.ndarray    # (P, n) distorted component, [0, 1]
    targets: np.ndarray   # (P, n) clean component, [0, 1]
    geometries: list

    def __len__(self) -> int:
        return self.inputs.shape[0]


def _as_cloud_pair(item) -> tuple[PointCloud, PointCloud]:
    if isinstance(item, DistortedPair):
        return item.clean, item.distorted
    clean, distorted = item
    return clean, distorted


def _to_ycbcr(pc: PointCloud) -> PointCloud:
    return rgb_to_ycbcr(pc) if pc.color_space == RGB8 else pc


def build_patch_dataset(pairs, config: TrainConfig) -> PatchDataset:
    """Cut every pair into patches of the configured size.

    Patches are taken from the distorted geometry (identical to the
    clean one); inputs come from the distorted colors, targets from the
    clean colors. Patch batching mixes clouds, so batch-norm statistics
    aggregate across the whole set.
    """
    chan = validation.check_component(config.component)
    net = config.resolved_net()
    inputs, targets, geometries = [], [], []
    for item in pairs:
        clean, distorted = _as_cloud_pair(item)
        clean, distorted = _to_ycbcr(clean), _to_ycbcr(distorted)
        validation.check_same_geometry(clean, distorted)
        ps = extract_patches(distorted, config.n, config.r)
        for row in ps.indices:
            coords = distorted.coords[row]
            geometries.append(PatchGeometry.from_coords(coords, net.k, net.distance_scale))
            inputs.append(distorted.colors[row, chan] / 255.0)
            targets.append(clean.colors[row, chan] / 255.0)
            if config.max_patches is not None and len(inputs) >= config.max_patches:
                break
        if config.max_patches is not None and len(inputs) >= config.max_patches:
            break
    if not inputs:
        raise EmptyDataset("no training patches; provide at least one cloud pair")
    return PatchDataset(
        inputs=np.stack(inputs).astype(np.float32),
        targets=np.stack(targets).astype(np.float32),
        geometries=geometries,
    )


class _TensorDataset:
    """Dataset pre-converted to torch tensors for fast batched indexing."""

    def __init__(self, data: PatchDataset, dtype=torch.float32):
        self.inputs = torch.from_numpy(data.inputs).to(dtype).unsqueeze(1)   # (P, 1, n)
        self.targets = torch.from_numpy(data.targets).to(dtype).unsqueeze(1)
        idx, w, nrm = batch_geometry(data.geometries, dtype=dtype)
        self.idx, self.w, self.nrm = idx, w, nrm

    def batch(self, rows: np.ndarray):
        rows = torch.from_numpy(np.ascontiguousarray(rows))
        return (self.inputs[rows], self.targets[rows],
                self.idx[rows], self.w[rows], self.nrm[rows])


def evaluate_loss(model, data: PatchDataset, batch_size: int = 12) -> float:
    """Mean MSE over a patch dataset in eval mode (no stat updates)."""
    tensors = _TensorDataset(data, dtype=next(model.parameters()).dtype)
    was_training = model.training
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for lo in range(0, len(data), batch_size):
            rows = np.arange(lo, min(lo + batch_size, len(data)))
            color, target, idx, w, nrm = tensors.batch(rows)
            out = model(color, idx, w, nrm)
            total += float(ops.mse_loss(out, target)) * len(rows)
            count += len(rows)
    model.train(was_training)
    return total / count


def train(config: TrainConfig, pairs, save_optimizer: bool = False) -> Checkpoint:
    """Run the full loop and return (and optionally write) the checkpoint.

    Every epoch reshuffles the patches with the seeded generator, steps
    Adam at the step-decayed learning rate, and logs the mean loss. A
    checkpoint is written at every learning-rate boundary and at the
    end when `checkpoint_out` is set.
    """
    pairs = list(pairs)
    if not pairs:
        raise EmptyDataset("no training pairs")
    data = build_patch_dataset(pairs, config)
    return train_on_patches(config, data, save_optimizer=save_optimizer)


def train_on_patches(config: TrainConfig, data: PatchDataset,
                     save_optimizer: bool = False) -> Checkpoint:
    if len(data) == 0:
        raise EmptyDataset("patch dataset is empty")
    net_cfg = config.resolved_net()
    torch.manual_seed(config.seed)
    model = build_model(net_cfg, config.seed)
    model.train()
    params = list(model.parameters())
    state = ops.AdamState.for_params(
        params, beta1=0.9, beta2=0.999, eps=1e-8, base_lr=config.base_lr)
    tensors = _TensorDataset(data)
    rng = np.random.default_rng(config.seed)
    history = []
    for epoch in range(config.epochs):
        lr = ops.lr_at_epoch(config.base_lr, epoch, config.lr_step, config.lr_factor)
        order = rng.permutation(len(data))
        total = 0.0
        for lo in range(0, len(data), config.batch_size):
            rows = order[lo:lo + config.batch_size]
            color, target, idx, w, nrm = tensors.batch(rows)
            out = model(color, idx, w, nrm)
            loss = ops.mse_loss(out, target)
            grads = ops.backward(loss, params)
            ops.adam_step(params, grads, state, lr)
            total += float(loss.detach()) * len(rows)
        mean_loss = total / len(data)
        history.append(mean_loss)
        log.info("epoch %d/%d lr %.6g loss %.6g",
                 epoch + 1, config.epochs, lr, mean_loss)
        boundary = (epoch + 1) % config.lr_step == 0 and (epoch + 1) < config.epochs
        if boundary and config.checkpoint_out:
            ckpt = _make_checkpoint(model, config, history, state, save_optimizer)
            save_checkpoint(ckpt, f"{config.checkpoint_out}.epoch{epoch + 1}")
    ckpt = _make_checkpoint(model, config, history, state, save_optimizer)
    if config.checkpoint_out:
        save_checkpoint(ckpt, config.checkpoint_out)
    return ckpt


def _make_checkpoint(model, config: TrainConfig, history, state, save_optimizer) -> Checkpoint:
    metadata = {
        "component": config.component,
        "epochs": config.epochs,
        "completed_epochs": len(history),
        "batch_size": config.batch_size,
        "base_lr": config.base_lr,
        "lr_step": config.lr_step,
        "lr_factor": config.lr_factor,
        "r": config.r,
        "seed": config.seed,
        "loss_history": [float(v) for v in history],
    }
    optimizer = None
    if save_optimizer:
        names = [name for name, _ in model.named_parameters()]
        optimizer = {
            "step": state.step,
            "beta1": state.beta1, "beta2": state.beta2,
            "eps": state.eps, "base_lr": state.base_lr,
            "m": {n: t.detach().numpy() for n, t in zip(names, state.m)},
            "v": {n: t.detach().numpy() for n, t in zip(names, state.v)},
        }
    return checkpoint_from_model(model, config.component, metadata, optimizer)
