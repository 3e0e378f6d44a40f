"""Differentiable tensor operations and the Adam optimizer.

Thin, contract-checked wrappers over torch: these are the primitives
the network is assembled from, exposed channel-last so every one of
them can be verified against central finite differences in isolation.
Training and inference run in 32-bit; gradient checks run the same code
in 64-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import InvalidArgument, NotScalarLoss, ShapeMismatch


def linear_pointwise(x: torch.Tensor, W: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Shared affine map applied at every leading position: y = x @ W + b.

    Equivalent to a 1x1 convolution over points/neighbors.
    """
    if W.ndim != 2 or x.shape[-1] != W.shape[0]:
        raise ShapeMismatch(f"x inner dim {x.shape[-1]} does not match W {tuple(W.shape)}")
    if b.ndim != 1 or b.shape[0] != W.shape[1]:
        raise ShapeMismatch(f"bias {tuple(b.shape)} does not match W {tuple(W.shape)}")
    return x @ W + b


@dataclass
class BatchNormState:
    """Running statistics for one channel-last batch-norm layer."""

    running_mean: torch.Tensor
    running_var: torch.Tensor
    momentum: float = 0.1

    @classmethod
    def for_channels(cls, c: int, momentum: float = 0.1, dtype=torch.float32):
        return cls(torch.zeros(c, dtype=dtype), torch.ones(c, dtype=dtype), momentum)


def batch_norm(
    x: torch.Tensor,
    gamma: torch.Tensor,
    beta: torch.Tensor,
    state: BatchNormState,
    mode: str = "train",
    eps: float = 1e-5,
) -> torch.Tensor:
    """Per-channel normalization over all non-channel axes (channel last).

    Train mode uses batch statistics and updates the running estimates
    (unbiased variance, as torch does); eval mode uses the running ones.
    """
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeMismatch(f"gamma/beta must be ({c},)")
    axes = tuple(range(x.ndim - 1))
    if mode == "train":
        mean = x.mean(dim=axes)
        var = x.var(dim=axes, unbiased=False)
        count = x.numel() // c
        with torch.no_grad():
            unbiased = var * count / max(count - 1, 1)
            m = state.momentum
            state.running_mean.mul_(1 - m).add_(mean.detach().to(state.running_mean.dtype), alpha=m)
            state.running_var.mul_(1 - m).add_(unbiased.detach().to(state.running_var.dtype), alpha=m)
    elif mode == "eval":
        mean = state.running_mean.to(x.dtype)
        var = state.running_var.to(x.dtype)
    else:
        raise InvalidArgument(f"mode must be 'train' or 'eval', got {mode!r}")
    return gamma * (x - mean) / torch.sqrt(var + eps) + beta


def leaky_relu(x: torch.Tensor, slope: float = 0.2) -> torch.Tensor:
    """y = x for x >= 0, slope * x otherwise."""
    return torch.nn.functional.leaky_relu(x, negative_slope=slope)


def softmax_rows(A: torch.Tensor) -> torch.Tensor:
    """Row-wise softmax along the last axis, max-subtracted for stability."""
    return torch.softmax(A, dim=-1)


def maxpool_neighbors(x: torch.Tensor) -> torch.Tensor:
    """Max over the neighbor axis: (..., k, C) -> (..., C).

    The backward pass routes the gradient to the first (lowest-index)
    neighbor attaining the maximum.
    """
    return x.max(dim=-2).values


def concat_channels(xs) -> torch.Tensor:
    """Channel-axis concatenation in argument order."""
    xs = list(xs)
    lead = xs[0].shape[:-1]
    for t in xs[1:]:
        if t.shape[:-1] != lead:
            raise ShapeMismatch("leading dimensions differ between concat inputs")
    return torch.cat(xs, dim=-1)


def elementwise(a: torch.Tensor, b: torch.Tensor, op: str) -> torch.Tensor:
    """Broadcasted elementwise add or mul."""
    try:
        torch.broadcast_shapes(a.shape, b.shape)
    except RuntimeError as exc:
        raise ShapeMismatch(str(exc)) from exc
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    raise InvalidArgument(f"op must be 'add' or 'mul', got {op!r}")


def mse_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean of squared differences."""
    if pred.shape != target.shape:
        raise ShapeMismatch(f"pred {tuple(pred.shape)} vs target {tuple(target.shape)}")
    return ((pred - target) ** 2).mean()


def backward(loss: torch.Tensor, params) -> list[torch.Tensor]:
    """Reverse-mode gradients of a scalar loss for each parameter.

    Parameters that do not influence the loss receive zero tensors.
    """
    if loss.numel() != 1:
        raise NotScalarLoss(f"loss must be scalar, got shape {tuple(loss.shape)}")
    params = list(params)
    grads = torch.autograd.grad(loss, params, allow_unused=True, materialize_grads=True)
    return list(grads)


@dataclass
class AdamState:
    """First/second moment estimates plus the shared step counter."""

    m: list[torch.Tensor]
    v: list[torch.Tensor]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    base_lr: float = 1e-3

    @classmethod
    def for_params(cls, params, beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8, base_lr: float = 1e-3) -> "AdamState":
        params = list(params)
        return cls(
            m=[torch.zeros_like(p) for p in params],
            v=[torch.zeros_like(p) for p in params],
            beta1=beta1, beta2=beta2, eps=eps, base_lr=base_lr,
        )


def adam_step(params, grads, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place on the parameters."""
    params, grads = list(params), list(grads)
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatch("params, grads and state must have equal length")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    with torch.no_grad():
        for p, g, m, v in zip(params, grads, state.m, state.v):
            if p.shape != g.shape:
                raise ShapeMismatch(f"param {tuple(p.shape)} vs grad {tuple(g.shape)}")
            m.mul_(state.beta1).add_(g, alpha=1.0 - state.beta1)
            v.mul_(state.beta2).addcmul_(g, g, value=1.0 - state.beta2)
            p.sub_(lr * (m / c1) / ((v / c2).sqrt() + state.eps))


def lr_at_epoch(base: float, epoch: int, step_epochs: int = 60, factor: float = 0.25) -> float:
    """Step-decayed learning rate: base * factor ** (epoch // step_epochs)."""
    if epoch < 0:
        raise InvalidArgument(f"epoch must be >= 0, got {epoch}")
    return base * factor ** (epoch // step_epochs)
