"""Dynamic saliency masks against a frozen classifier.

The perturbation pulls each entry toward the trailing moving average of its
own series; the mask is fitted so the perturbed prediction matches the
original one while staying sparse.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..data import Batch, Dataset, to_batch
from ..models.layers import TensorBatch
from ..numerics import DTYPE, PROB_EPS, ParamSet, RngStream, adam_step
from .saliency import SaliencyMatrix, slot_mean


@dataclass(frozen=True)
class DynamaskConfig:
    W: int = 2
    sparsity: float = 0.1
    steps: int = 500
    lr: float = 0.05

    def __post_init__(self):
        if self.W < 0:
            raise ValueError("W must be >= 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.sparsity < 0:
            raise ValueError("sparsity weight must be >= 0")


def trailing_mean(X, W: int):
    """Mean over slots ``max(0, t - W) .. t`` along the last axis."""
    is_t = isinstance(X, torch.Tensor)
    T = X.shape[-1]
    cols = []
    for t in range(T):
        lo = max(0, t - W)
        cols.append(X[..., lo : t + 1].sum(-1) / (t + 1 - lo))
    return torch.stack(cols, -1) if is_t else np.stack(cols, -1)


def dynamask_perturb(X, M, W: int):
    """``m * x + (1 - m) * mu`` written as ``x + (1 - m) * (mu - x)``.

    The rewritten form returns ``X`` bit-for-bit when ``M == 1`` or ``W == 0``.
    """
    if tuple(X.shape) != tuple(M.shape):
        raise ValueError(f"mask shape {tuple(M.shape)} does not match input shape {tuple(X.shape)}")
    if W < 0:
        raise ValueError("W must be >= 0")
    mu = trailing_mean(X, W)
    return X + (1.0 - M) * (mu - X)


@dataclass
class MaskFit:
    mask: np.ndarray  # (D, T)
    history: list[float] = field(default_factory=list)


def _single(sample, window: int) -> TensorBatch:
    if isinstance(sample, Dataset):
        sample = to_batch(sample, window)
    if isinstance(sample, Batch):
        sample = TensorBatch.of(sample)
    if len(sample) != 1:
        raise ValueError("dynamask_fit expects a single sample")
    return sample


def mask_objective(net, tb: TensorBatch, M: torch.Tensor, target: torch.Tensor, cfg: DynamaskConfig):
    T = M.shape[1]
    X = tb.X[0, :T, :].T  # (D, T)
    Xp = dynamask_perturb(X, M, cfg.W)
    full = tb.X.clone()
    full[0, :T, :] = Xp.T
    p = net(tb.with_X(full)).clamp(PROB_EPS, 1 - PROB_EPS)
    bce = -(target * torch.log(p) + (1 - target) * torch.log(1 - p)).mean()
    return bce + cfg.sparsity * M.mean()


def fit_mask(model, sample, cfg: DynamaskConfig = DynamaskConfig(), seed: int | RngStream = 0,
             window: int = 14) -> MaskFit:
    """Projected Adam on the mask; the model's parameters are never written.

    ``seed`` is accepted for interface symmetry; the fit itself is deterministic
    (the mask starts at 0.5 everywhere).
    """
    net = getattr(model, "network", model)
    net.eval()
    tb = _single(sample, getattr(model, "window", window))
    T = int(tb.mask[0].sum().item())
    D = tb.X.shape[2]
    with torch.no_grad():
        target = net(tb).detach()
    M = torch.full((D, T), 0.5, dtype=DTYPE, requires_grad=True)
    ps = ParamSet({"mask": M})
    history = []
    for _ in range(cfg.steps):
        obj = mask_objective(net, tb, M, target, cfg)
        (g,) = torch.autograd.grad(obj, M)
        history.append(float(obj.detach()))
        adam_step(ps, {"mask": g}, cfg.lr)
        with torch.no_grad():
            M.clamp_(0.0, 1.0)
    with torch.no_grad():
        history.append(float(mask_objective(net, tb, M, target, cfg)))
    return MaskFit(M.detach().numpy().copy(), history)


def dynamask_fit(model, sample, cfg: DynamaskConfig = DynamaskConfig(), seed: int | RngStream = 0,
                 feature_names=None, window: int = 14) -> SaliencyMatrix:
    fit = fit_mask(model, sample, cfg, seed, window)
    names = feature_names or _mts_names(model, fit.mask.shape[0])
    return SaliencyMatrix(tuple(names), fit.mask, "Dynamask", "per-sample")


def dynamask_population(model, data: Dataset, cfg: DynamaskConfig = DynamaskConfig(),
                        seed: int | RngStream = 0, window: int = 14) -> SaliencyMatrix:
    """Mean of per-sample masks over the samples observed at each slot."""
    L = getattr(model, "window", window)
    batch = to_batch(data, L)
    I, L, D = batch.X.shape
    masks = np.zeros((I, D, L))
    for i in range(I):
        fit = fit_mask(model, batch.take([i]), cfg, seed, L)
        masks[i, :, : fit.mask.shape[1]] = fit.mask
    return SaliencyMatrix(tuple(_mts_names(model, D)), slot_mean(masks, batch.lengths),
                          "Dynamask", "mean-over-samples")


def _mts_names(model, D: int) -> list[str]:
    schema = getattr(model, "schema", None)
    return list(schema.mts_names) if schema is not None else [f"f{d}" for d in range(D)]
