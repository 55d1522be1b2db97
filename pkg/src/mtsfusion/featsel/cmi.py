"""Plug-in entropy / (conditional) mutual information and greedy CMI feature selection.

All quantities are in bits. Variables are integer code arrays; multi-column
variables are first mapped to joint codes.
"""
from __future__ import annotations

import numpy as np

from ..data import Dataset
from .report import SelectionReport

MISSING = -1


def entropy(counts) -> float:
    """Entropy (bits) of the distribution proportional to ``counts``; 0 log 0 = 0."""
    c = np.asarray(counts, dtype=np.float64).ravel()
    if np.any(c < 0):
        raise ValueError("counts must be nonnegative")
    total = c.sum()
    if total <= 0:
        raise ValueError("counts must have a positive total")
    # sorted so that equal count multisets give bit-identical sums
    p = np.sort(c[c > 0]) / total
    return float(-np.sum(p * np.log2(p)))


def joint_codes(*columns) -> np.ndarray:
    """Dense integer code for each distinct tuple across the given code columns."""
    cols = [np.asarray(c).reshape(len(c), -1) for c in columns]
    if not cols:
        raise ValueError("need at least one column")
    stacked = np.concatenate(cols, axis=1) if len(cols) > 1 else cols[0]
    if stacked.shape[1] == 0:
        return np.zeros(stacked.shape[0], dtype=np.int64)
    _, inv = np.unique(stacked, axis=0, return_inverse=True)
    return inv.ravel().astype(np.int64)


def entropy_of(*columns) -> float:
    codes = joint_codes(*columns)
    return entropy(np.bincount(codes))


def mutual_information(x, y) -> float:
    return entropy_of(x) + entropy_of(y) - entropy_of(x, y)


def cmi(x, y, z=None) -> float:
    """``I(X;Y|Z) = H(X,Z) + H(Y,Z) - H(Z) - H(X,Y,Z)``; without ``z`` this is ``I(X;Y)``."""
    if z is None:
        return mutual_information(x, y)
    return entropy_of(x, z) + entropy_of(y, z) - entropy_of(z) - entropy_of(x, y, z)


def quantile_codes(values: np.ndarray, bins: int) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    edges = np.unique(np.quantile(v, np.linspace(0.0, 1.0, bins + 1)[1:-1]))
    return np.searchsorted(edges, v, side="right").astype(np.int64)


def discretize(ds: Dataset, bins: int = 4, window: int = 14) -> dict[str, np.ndarray]:
    """Integer codes per feature; an MTS feature becomes one code per distinct slot tuple.

    Slots beyond a stay's length are coded as a separate "missing" symbol.
    """
    schema = ds.schema
    out: dict[str, np.ndarray] = {}
    for g, f in enumerate(schema.static):
        if f.kind == "categorical":
            out[f.name] = np.array([f.vocab.index(s.static[g]) for s in ds.samples], dtype=np.int64)
        elif f.kind == "binary":
            out[f.name] = np.array([int(s.static[g]) for s in ds.samples], dtype=np.int64)
        else:
            out[f.name] = quantile_codes(np.array([float(s.static[g]) for s in ds.samples]), bins)
    I = len(ds)
    for d, f in enumerate(schema.mts):
        M = np.full((I, window), np.nan)
        for i, s in enumerate(ds.samples):
            T = min(s.T, window)
            M[i, :T] = s.mts[d, :T]
        obs = ~np.isnan(M)
        codes = np.full((I, window), MISSING, dtype=np.int64)
        if f.kind == "binary":
            codes[obs] = M[obs].astype(np.int64)
        else:
            codes[obs] = quantile_codes(M[obs], bins)
        out[f.name] = joint_codes(codes)
    return out


def greedy_cmi(codes: dict[str, np.ndarray], y, n_select: int) -> list[tuple[str, float, dict[str, float]]]:
    """Forward selection maximizing ``I(y; candidate | selected)``.

    Returns ``(name, gain, candidate_gains)`` per step; ties keep the earliest
    candidate in ``codes`` order.
    """
    y = np.asarray(y)
    names = list(codes)
    if n_select > len(names):
        raise ValueError(f"cannot select {n_select} of {len(names)} features")
    z = np.zeros(len(y), dtype=np.int64)
    chosen: list[str] = []
    steps = []
    for _ in range(n_select):
        gains = {n: cmi(y, codes[n], z) for n in names if n not in chosen}
        best = max(gains, key=lambda n: (gains[n], -names.index(n)))
        chosen.append(best)
        steps.append((best, gains[best], gains))
        z = joint_codes(z, codes[best])
    return steps


def cmi_select(ds: Dataset, n_select: int, bins: int = 4, window: int = 14) -> SelectionReport:
    codes = discretize(ds, bins, window)
    steps = greedy_cmi(codes, ds.labels, n_select)
    scores = {n: 0.0 for n in codes}
    for name, gain, _ in steps:
        scores[name] = gain
    return SelectionReport("CMI", tuple(n for n, _, _ in steps), scores,
                           {"n_select": n_select, "bins": bins, "window": window})
