"""Time perturbation importance: AUC drop when one time slot is corrupted with Gaussian noise."""
from __future__ import annotations

import numpy as np

from ..data import Dataset, to_batch
from ..featsel.pfi import as_predictor
from ..metrics import roc_auc
from ..numerics import RngStream


def tpi_drops(model, val: Dataset, sigma: float = 1.0, repeats: int = 10,
              seed: int | RngStream = 0, window: int = 14) -> np.ndarray:
    """Mean AUC drop per slot, before normalization."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    predict = as_predictor(model)
    rng = seed if isinstance(seed, RngStream) else RngStream(seed, 0x7B1)
    batch = to_batch(val, getattr(model, "window", window))
    base = roc_auc(predict(batch), batch.y)
    I, L, D = batch.X.shape
    drops = np.zeros(L)
    for t in range(L):
        live = (batch.lengths > t)[:, None]
        total = 0.0
        for r in range(repeats):
            noisy = batch.copy()
            noise = rng.child(t).child(r).normal((I, D), scale=sigma) if sigma > 0 else np.zeros((I, D))
            noisy.X[:, t, :] = batch.X[:, t, :] + noise * live
            total += base - roc_auc(predict(noisy), batch.y)
        drops[t] = total / repeats
    return drops


def normalize_drops(drops: np.ndarray) -> np.ndarray:
    """Clip negative drops to zero and scale so the largest score is 1."""
    d = np.clip(np.asarray(drops, dtype=float), 0.0, None)
    top = d.max(initial=0.0)
    return d / top if top > 0 else np.zeros_like(d)


def tpi_scores(model, val: Dataset, sigma: float = 1.0, repeats: int = 10,
               seed: int | RngStream = 0, window: int = 14) -> np.ndarray:
    return normalize_drops(tpi_drops(model, val, sigma, repeats, seed, window))
