"""Permutation feature importance scored by ROC AUC drop."""
from __future__ import annotations

from typing import Callable

import numpy as np

from ..data import Batch, Dataset, StaticLayout, to_batch
from ..metrics import roc_auc
from ..numerics import RngStream
from .report import SelectionReport


def as_predictor(model) -> Callable[[Batch], np.ndarray]:
    if hasattr(model, "predict"):
        return model.predict
    if callable(model):
        return model
    raise TypeError("model must be callable or expose predict(batch)")


def permute_feature(batch: Batch, layout: StaticLayout, mts_names: list[str], name: str, perm) -> Batch:
    """Copy of ``batch`` with feature ``name`` shuffled across patients by ``perm``.

    An MTS feature is moved as a whole windowed row, so each row keeps its
    own temporal pattern.
    """
    out = batch.copy()
    if name in layout.num_names:
        j = layout.num_names.index(name)
        out.static_num[:, j] = batch.static_num[perm, j]
    elif name in layout.cat_names:
        j = layout.cat_names.index(name)
        out.static_cat[:, j] = batch.static_cat[perm, j]
    elif name in mts_names:
        d = mts_names.index(name)
        out.X[:, :, d] = batch.X[perm, :, d]
    else:
        raise KeyError(f"unknown feature {name!r}")
    return out


def pfi_scores(
    model,
    val: Dataset,
    repeats: int = 10,
    seed: int | RngStream = 0,
    n_select: int | None = None,
    window: int = 14,
) -> SelectionReport:
    """Mean AUC drop per feature over ``repeats`` permutations.

    The top ``n_select`` features are selected; with ``n_select=None`` every
    feature with a positive mean drop is.
    """
    if len(val) == 0:
        raise ValueError("validation set is empty")
    predict = as_predictor(model)
    rng = seed if isinstance(seed, RngStream) else RngStream(seed, 0xF1)
    schema = val.schema
    layout = StaticLayout.of(schema)
    batch = to_batch(val, getattr(model, "window", window))
    y = batch.y
    base = roc_auc(predict(batch), y)
    names = schema.feature_names
    scores = {}
    for k, name in enumerate(names):
        drops = []
        for r in range(repeats):
            perm = rng.child(k).child(r).permutation(len(y))
            drops.append(base - roc_auc(predict(permute_feature(batch, layout, schema.mts_names, name, perm)), y))
        scores[name] = float(np.mean(drops))
    ranked = sorted(names, key=lambda n: (-scores[n], names.index(n)))
    if n_select is None:
        selected = [n for n in ranked if scores[n] > 0]
    else:
        selected = ranked[:n_select]
    return SelectionReport("PFI", tuple(selected), scores,
                           {"repeats": repeats, "n_select": n_select, "baseline_auc": base})
