"""Synthetic ICU-like cohorts with planted label signal.

Static variables mimic admission data (age, gender, SAPS-3, origin, ...);
binary MTS rows mimic treatments and follow two-state Markov chains; count
rows mimic ICU-neighbour counts and follow bounded random walks. The label
is drawn from a logistic model over the planted features, with the
intercept calibrated to a target positive rate.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .data import DEFAULT_WINDOW, DataError, Dataset, FeatureSchema, FeatureSpec, PatientSample
from .numerics import RngStream

_STATIC_TEMPLATE = [
    FeatureSpec("age", "numeric"),
    FeatureSpec("gender", "binary"),
    FeatureSpec("saps3", "numeric"),
    FeatureSpec("origin", "categorical", ("emergency", "ward", "surgery", "other_hospital")),
    FeatureSpec("admission_month", "numeric"),
    FeatureSpec("reason", "categorical", ("cardiac", "respiratory", "sepsis", "trauma", "neuro")),
    FeatureSpec("admission_year", "numeric"),
    FeatureSpec("category", "categorical", ("medical", "surgical", "coronary")),
]
_STATIC_DIST = {
    "age": (63.0, 15.0),
    "saps3": (50.0, 14.0),
    "admission_month": (6.5, 3.4),
    "admission_year": (2012.0, 4.6),
}
_TREATMENTS = ["mech_vent", "CAR", "GLI", "PAP", "QUI", "CF3", "AMG", "ATF", "PEN", "OXA", "LIN", "MAC"]
_NEIGHBOURS = ["n_neighbors", "n_amr_neighbors", "CAR_n", "GLI_n", "PAP_n", "QUI_n", "CF3_n", "AMG_n"]


@dataclass
class SynthConfig:
    n_samples: int = 3158
    n_static: int = 8
    n_mts: int = 6
    length_range: tuple[int, int] = (1, 30)
    positive_rate: float = 605 / 3158
    effects: dict[str, float] = field(default_factory=dict)
    window: int = DEFAULT_WINDOW
    seed: int = 0
    rate_tolerance: float = 0.03

    def __post_init__(self):
        if not 0.0 < self.positive_rate < 1.0:
            raise ValueError("positive_rate must lie in (0, 1)")
        lo, hi = self.length_range
        if lo < 1 or hi < lo:
            raise ValueError("length_range must satisfy 1 <= min <= max")
        self.length_range = (int(lo), int(hi))
        names = set(synth_schema(self).feature_names)
        unknown = set(self.effects) - names
        if unknown:
            raise ValueError(f"planted features not in generated schema: {sorted(unknown)}")

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples, "n_static": self.n_static, "n_mts": self.n_mts,
            "length_range": list(self.length_range), "positive_rate": self.positive_rate,
            "effects": dict(self.effects), "window": self.window, "seed": self.seed,
            "rate_tolerance": self.rate_tolerance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        if "length_range" in d:
            d["length_range"] = tuple(d["length_range"])
        return cls(**d)


def synth_schema(cfg: SynthConfig) -> FeatureSchema:
    static = [
        _STATIC_TEMPLATE[g] if g < len(_STATIC_TEMPLATE) else FeatureSpec(f"static_{g}", "numeric")
        for g in range(cfg.n_static)
    ]
    mts = []
    nb = nc = 0
    for d in range(cfg.n_mts):
        if d % 2 == 0:
            name = _TREATMENTS[nb] if nb < len(_TREATMENTS) else f"treat_{nb}"
            mts.append(FeatureSpec(name, "binary"))
            nb += 1
        else:
            name = _NEIGHBOURS[nc] if nc < len(_NEIGHBOURS) else f"count_{nc}"
            mts.append(FeatureSpec(name, "count"))
            nc += 1
    return FeatureSchema(tuple(static), tuple(mts))


def _static_columns(schema: FeatureSchema, I: int, rng: RngStream) -> list[np.ndarray]:
    cols = []
    for f in schema.static:
        if f.kind == "numeric":
            mu, sd = _STATIC_DIST.get(f.name, (0.0, 1.0))
            cols.append(rng.normal(I) * sd + mu)
        elif f.kind == "binary":
            cols.append((rng.uniform(I) < 0.6).astype(float))
        else:
            cols.append(rng.integers(0, len(f.vocab), I))
    return cols


def _markov_rows(I: int, T: int, rng: RngStream) -> np.ndarray:
    p_on = rng.uniform() * 0.2 + 0.05
    p_stay = rng.uniform() * 0.2 + 0.7
    state = (rng.uniform(I) < 0.2).astype(float)
    out = np.empty((I, T))
    u = rng.uniform((I, T))
    for t in range(T):
        out[:, t] = state
        state = np.where(state == 1.0, u[:, t] < p_stay, u[:, t] < p_on).astype(float)
    return out


def _walk_rows(I: int, T: int, rng: RngStream) -> np.ndarray:
    cap = int(rng.integers(5, 16))
    level = rng.integers(0, cap + 1, I)
    steps = rng.integers(-1, 2, (I, T))
    out = np.empty((I, T))
    for t in range(T):
        out[:, t] = level
        level = np.clip(level + steps[:, t], 0, cap)
    return out


def _standardize(v: np.ndarray) -> np.ndarray:
    sd = v.std()
    return (v - v.mean()) / (sd if sd > 0 else 1.0)


def planted_score(cfg: SynthConfig, ds: Dataset) -> np.ndarray:
    """Latent linear score of the label model, recomputed from observed features.

    The label is Bernoulli(sigmoid(b + score)), so ranking by this score
    attains the Bayes ROC AUC.
    """
    schema = ds.schema
    score = np.zeros(len(ds))
    for name, effect in cfg.effects.items():
        if effect == 0.0:
            continue
        if name in schema.static_names:
            g = schema.static_names.index(name)
            f = schema.static[g]
            if f.kind == "categorical":
                raw = np.array([s.static[g] == f.vocab[0] for s in ds.samples], dtype=float)
            else:
                raw = np.array([float(s.static[g]) for s in ds.samples])
        else:
            d = schema.mts_names.index(name)
            raw = np.array([s.mts[d, : cfg.window].sum() for s in ds.samples])
        score += effect * _standardize(raw)
    return score


def _calibrate_intercept(score: np.ndarray, rate: float) -> float:
    f = lambda b: expit(b + score).mean() - rate  # noqa: E731
    lo, hi = -50.0, 50.0
    return brentq(f, lo, hi, xtol=1e-12)


def synth_generate(cfg: SynthConfig) -> tuple[Dataset, list[str]]:
    """Generate a cohort; returns the dataset and the planted (relevant) feature names."""
    rng = RngStream(cfg.seed, 0x5E7)
    schema = synth_schema(cfg)
    I = cfg.n_samples
    lo, hi = cfg.length_range
    lengths = rng.integers(lo, hi + 1, I)
    Tmax = int(lengths.max())

    cols = _static_columns(schema, I, rng.child(1))
    rows = []
    mrng = rng.child(2)
    for d, f in enumerate(schema.mts):
        sub = mrng.child(d)
        rows.append(_markov_rows(I, Tmax, sub) if f.kind == "binary" else _walk_rows(I, Tmax, sub))

    samples = []
    for i in range(I):
        static = tuple(
            f.vocab[int(cols[g][i])] if f.kind == "categorical" else float(cols[g][i])
            for g, f in enumerate(schema.static)
        )
        X = np.stack([rows[d][i, : lengths[i]] for d in range(schema.D)])
        samples.append(PatientSample(f"p{i:05d}", static, X, 0))
    ds = Dataset(schema, tuple(samples))

    score = planted_score(cfg, ds)
    b = _calibrate_intercept(score, cfg.positive_rate)
    p = expit(b + score)
    lrng = rng.child(3)
    for _ in range(100):
        y = (lrng.uniform(I) < p).astype(int)
        if abs(y.mean() - cfg.positive_rate) <= cfg.rate_tolerance and 0 < y.sum() < I:
            break
    else:
        raise DataError(
            f"could not realize positive rate {cfg.positive_rate:.3f} +/- {cfg.rate_tolerance} with I={I}"
        )
    ds = ds.with_samples(
        PatientSample(s.id, s.static, s.mts, int(lbl)) for s, lbl in zip(ds.samples, y)
    )
    relevant = [n for n in schema.feature_names if cfg.effects.get(n, 0.0) != 0.0]
    return ds, relevant
