"""Feature selection by bootstrap confidence intervals on class-mean differences."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..data import Dataset
from ..numerics import RngStream
from .report import SelectionReport


@dataclass(frozen=True)
class CibConfig:
    R: int = 1000
    alpha: float = 0.05
    window: int = 14

    def __post_init__(self):
        if self.R < 100:
            raise ValueError("R must be >= 100")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.R * self.alpha / 2.0 < 1.0:
            raise ValueError(f"R={self.R} is too small for two-sided percentiles at alpha={self.alpha}")


def bootstrap_deltas(values: np.ndarray, labels: np.ndarray, R: int, rng: RngStream) -> np.ndarray:
    """Bootstrap replicates of mean(class 1) - mean(class 0), one column per feature.

    ``values`` is (n, F); both classes are resampled with replacement at their
    original sizes. Returns an (R, F) array.
    """
    pos = values[labels == 1]
    neg = values[labels == 0]
    gen = rng.generator
    cp = gen.multinomial(len(pos), np.full(len(pos), 1.0 / len(pos)), size=R)
    cn = gen.multinomial(len(neg), np.full(len(neg), 1.0 / len(neg)), size=R)
    return cp @ pos / len(pos) - cn @ neg / len(neg)


def percentile_ci(deltas: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = np.quantile(deltas, [alpha / 2.0, 1.0 - alpha / 2.0], axis=0)
    return lo, hi


def _margin(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    # > 0 exactly when the interval excludes zero
    return np.maximum(lo, -hi)


def cib_select(ds: Dataset, cfg: CibConfig = CibConfig(), seed: int | RngStream = 0) -> SelectionReport:
    y = ds.labels
    if y.min() == y.max():
        raise ValueError("CIB needs both classes present")
    rng = seed if isinstance(seed, RngStream) else RngStream(seed, 0xC1B)
    schema = ds.schema
    scores: dict[str, float] = {}
    selected: list[str] = []

    static_idx = [g for g, f in enumerate(schema.static) if f.kind != "categorical"]
    if static_idx:
        V = np.array([[float(s.static[g]) for g in static_idx] for s in ds.samples])
        lo, hi = percentile_ci(bootstrap_deltas(V, y, cfg.R, rng.child(0)), cfg.alpha)
        margin = _margin(lo, hi)
        for j, g in enumerate(static_idx):
            name = schema.static[g].name
            scores[name] = float(margin[j])
            if margin[j] > 0:
                selected.append(name)

    L = cfg.window
    lengths = np.array([s.T for s in ds.samples])
    significant = np.zeros((L, schema.D), dtype=bool)
    for t in range(L):
        rows = np.flatnonzero(lengths > t)
        yt = y[rows]
        if len(rows) == 0 or yt.min() == yt.max():
            continue
        V = np.array([ds.samples[i].mts[:, t] for i in rows])
        lo, hi = percentile_ci(bootstrap_deltas(V, yt, cfg.R, rng.child(1).child(t)), cfg.alpha)
        significant[t] = _margin(lo, hi) > 0
    n_sig = significant.sum(axis=0)
    for d, f in enumerate(schema.mts):
        scores[f.name] = float(n_sig[d]) / L
        if n_sig[d] > L / 2.0:
            selected.append(f.name)

    order = {n: k for k, n in enumerate(schema.feature_names)}
    selected.sort(key=order.__getitem__)
    return SelectionReport("CIB", tuple(selected), scores, asdict(cfg))
