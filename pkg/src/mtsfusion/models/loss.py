"""Balanced binary cross-entropy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..numerics import clip_probs


@dataclass(frozen=True)
class BbceConfig:
    beta: float

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")


def bbce(predictions, labels, cfg: BbceConfig | float):
    """``-mean(beta * y * log p + (1 - beta) * (1 - y) * log(1 - p))`` with p clipped to [1e-7, 1-1e-7].

    Works on numpy arrays (returns float) and on torch tensors (returns a
    differentiable scalar).
    """
    beta = cfg.beta if isinstance(cfg, BbceConfig) else float(cfg)
    if len(predictions) != len(labels):
        raise ValueError(f"length mismatch: {len(predictions)} predictions vs {len(labels)} labels")
    if isinstance(predictions, torch.Tensor):
        p = clip_probs(predictions)
        y = torch.as_tensor(labels, dtype=p.dtype)
        return -(beta * y * torch.log(p) + (1 - beta) * (1 - y) * torch.log(1 - p)).mean()
    p = clip_probs(predictions)
    y = np.asarray(labels, dtype=np.float64)
    return float(-np.mean(beta * y * np.log(p) + (1 - beta) * (1 - y) * np.log(1 - p)))


def bce(predictions, labels) -> float:
    p = clip_probs(predictions)
    y = np.asarray(labels, dtype=np.float64)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def beta_from_labels(labels) -> BbceConfig:
    """Majority-class share of the labels."""
    y = np.asarray(labels).astype(int)
    n = len(y)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == n:
        raise ValueError("beta needs both classes present")
    return BbceConfig(max(n_pos, n - n_pos) / n)
