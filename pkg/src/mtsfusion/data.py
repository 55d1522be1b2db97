"""Irregular multimodal samples: schema, CSV ingestion, windowing, normalization, splits."""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .numerics import RngStream

STATIC_KINDS = ("numeric", "binary", "categorical")
MTS_KINDS = ("numeric", "binary", "count")
DEFAULT_WINDOW = 14


class DataError(ValueError):
    """Malformed input data. ``location`` points at the offending file/row when known."""

    def __init__(self, message: str, location: str | None = None):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    vocab: tuple[str, ...] = ()


@dataclass(frozen=True)
class FeatureSchema:
    static: tuple[FeatureSpec, ...]
    mts: tuple[FeatureSpec, ...]

    def __post_init__(self):
        names = [f.name for f in self.static] + [f.name for f in self.mts]
        if len(set(names)) != len(names):
            raise DataError("feature names must be unique across static and mts lists")
        for f in self.static:
            if f.kind not in STATIC_KINDS:
                raise DataError(f"static feature {f.name!r} has unknown kind {f.kind!r}")
            if f.kind == "categorical" and not f.vocab:
                raise DataError(f"categorical feature {f.name!r} needs a non-empty vocabulary")
        for f in self.mts:
            if f.kind not in MTS_KINDS:
                raise DataError(f"mts feature {f.name!r} has unknown kind {f.kind!r}")

    @property
    def G(self) -> int:
        return len(self.static)

    @property
    def D(self) -> int:
        return len(self.mts)

    @property
    def static_names(self) -> list[str]:
        return [f.name for f in self.static]

    @property
    def mts_names(self) -> list[str]:
        return [f.name for f in self.mts]

    @property
    def feature_names(self) -> list[str]:
        return self.static_names + self.mts_names

    def to_dict(self) -> dict:
        def spec(f: FeatureSpec) -> dict:
            d = {"name": f.name, "kind": f.kind}
            if f.vocab:
                d["vocab"] = list(f.vocab)
            return d

        return {"static": [spec(f) for f in self.static], "mts": [spec(f) for f in self.mts]}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        def spec(e: dict) -> FeatureSpec:
            return FeatureSpec(e["name"], e["kind"], tuple(str(v) for v in e.get("vocab", ())))

        return cls(tuple(spec(e) for e in d.get("static", [])), tuple(spec(e) for e in d.get("mts", [])))

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class PatientSample:
    """One ICU stay: static values (schema order), a D x T block, and the label."""

    id: str
    static: tuple
    mts: np.ndarray
    label: int

    @property
    def T(self) -> int:
        return int(self.mts.shape[1])


@dataclass(frozen=True)
class NormStats:
    static: dict[str, tuple[float, float]]
    mts: dict[str, tuple[float, float]]

    def to_dict(self) -> dict:
        return {"static": {k: list(v) for k, v in self.static.items()},
                "mts": {k: list(v) for k, v in self.mts.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls({k: tuple(v) for k, v in d["static"].items()},
                   {k: tuple(v) for k, v in d["mts"].items()})


@dataclass(frozen=True)
class Dataset:
    schema: FeatureSchema
    samples: tuple[PatientSample, ...]
    stats: NormStats | None = None

    def __post_init__(self):
        for s in self.samples:
            validate_sample(self.schema, s)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def subset(self, idx: Sequence[int]) -> "Dataset":
        return replace(self, samples=tuple(self.samples[i] for i in idx))

    def with_samples(self, samples) -> "Dataset":
        return replace(self, samples=tuple(samples))


def validate_sample(schema: FeatureSchema, s: PatientSample) -> None:
    if s.mts.ndim != 2 or s.mts.shape[0] != schema.D:
        raise DataError(f"sample {s.id}: mts must have {schema.D} rows, got shape {s.mts.shape}")
    if s.mts.shape[1] < 1:
        raise DataError(f"sample {s.id}: T must be >= 1")
    if len(s.static) != schema.G:
        raise DataError(f"sample {s.id}: expected {schema.G} static values, got {len(s.static)}")
    if s.label not in (0, 1):
        raise DataError(f"sample {s.id}: label must be 0 or 1")
    for f, v in zip(schema.static, s.static):
        if f.kind == "categorical" and v not in f.vocab:
            raise DataError(f"sample {s.id}: {v!r} not in vocabulary of {f.name!r}")


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def _parse_number(text: str, where: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"non-numeric value {text!r}", where) from None
    if not np.isfinite(v):
        raise DataError(f"non-finite value {text!r}", where)
    return v


def _parse_static(f: FeatureSpec, text: str, where: str):
    if f.kind == "categorical":
        if text not in f.vocab:
            raise DataError(f"unknown category {text!r} for {f.name!r}", where)
        return text
    v = _parse_number(text, where)
    if f.kind == "binary" and v not in (0.0, 1.0):
        raise DataError(f"binary feature {f.name!r} must be 0 or 1, got {text!r}", where)
    return v


def load_schema(path) -> FeatureSchema:
    with open(path, encoding="utf-8") as fh:
        return FeatureSchema.from_dict(json.load(fh))


def load_dataset(static_path, mts_path, schema_path) -> Dataset:
    schema = load_schema(schema_path)
    static_rows: dict[str, tuple[int, tuple]] = {}
    with open(static_path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"patient_id", "label", *schema.static_names} - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"missing columns {sorted(missing)}", str(static_path))
        for lineno, row in enumerate(reader, start=2):
            where = f"{static_path}:{lineno}"
            pid = row["patient_id"]
            if pid in static_rows:
                raise DataError(f"duplicate patient id {pid!r}", where)
            label = _parse_number(row["label"], where)
            if label not in (0.0, 1.0):
                raise DataError(f"label must be 0 or 1, got {row['label']!r}", where)
            values = tuple(_parse_static(f, row[f.name], where) for f in schema.static)
            static_rows[pid] = (int(label), values)

    feat_index = {name: d for d, name in enumerate(schema.mts_names)}
    cells: dict[str, dict[tuple[int, int], float]] = {pid: {} for pid in static_rows}
    with open(mts_path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"patient_id", "time_slot", "feature", "value"} - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"missing columns {sorted(missing)}", str(mts_path))
        for lineno, row in enumerate(reader, start=2):
            where = f"{mts_path}:{lineno}"
            pid = row["patient_id"]
            if pid not in cells:
                raise DataError(f"unknown patient id {pid!r}", where)
            if row["feature"] not in feat_index:
                raise DataError(f"unknown feature {row['feature']!r}", where)
            try:
                slot = int(row["time_slot"])
            except ValueError:
                raise DataError(f"time_slot must be an integer, got {row['time_slot']!r}", where) from None
            if slot < 0:
                raise DataError("time_slot must be >= 0", where)
            key = (slot, feat_index[row["feature"]])
            if key in cells[pid]:
                raise DataError(f"duplicate (patient, slot, feature) = ({pid}, {slot}, {row['feature']})", where)
            cells[pid][key] = _parse_number(row["value"], where)

    samples = []
    for pid, (label, values) in static_rows.items():
        obs = cells[pid]
        T = 1 + max((slot for slot, _ in obs), default=0)
        X = np.zeros((schema.D, T))
        for (slot, d), v in obs.items():
            X[d, slot] = v
        samples.append(PatientSample(pid, values, X, label))
    return Dataset(schema, tuple(samples))


def save_dataset(ds: Dataset, out_dir) -> dict[str, Path]:
    """Write ``static.csv``, ``mts.csv`` and ``schema.json``.

    Every MTS cell is written, zeros included, so ``T_i`` survives the round trip.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"static": out / "static.csv", "mts": out / "mts.csv", "schema": out / "schema.json"}
    with open(paths["schema"], "w", encoding="utf-8") as fh:
        json.dump(ds.schema.to_dict(), fh, indent=2)
    with open(paths["static"], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "label", *ds.schema.static_names])
        for s in ds.samples:
            w.writerow([s.id, s.label, *(v if isinstance(v, str) else repr(float(v)) for v in s.static)])
    with open(paths["mts"], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "time_slot", "feature", "value"])
        names = ds.schema.mts_names
        for s in ds.samples:
            for t in range(s.T):
                for d, name in enumerate(names):
                    w.writerow([s.id, t, name, repr(float(s.mts[d, t]))])
    return paths


# ---------------------------------------------------------------------------
# Windowing and normalization
# ---------------------------------------------------------------------------


def window(sample: PatientSample, L: int = DEFAULT_WINDOW) -> PatientSample:
    """Keep the first ``L`` slots; shorter stays are returned unchanged."""
    if L < 1:
        raise ValueError("window length must be >= 1")
    if sample.T <= L:
        return sample
    return replace(sample, mts=sample.mts[:, :L].copy())


def window_dataset(ds: Dataset, L: int = DEFAULT_WINDOW) -> Dataset:
    return ds.with_samples(window(s, L) for s in ds.samples)


def fit_normalizer(train: Dataset) -> NormStats:
    """Population mean/std per numeric (static) and numeric/count (MTS) feature.

    MTS statistics pool every patient's observed slots.
    """
    schema = train.schema
    static = {}
    for g, f in enumerate(schema.static):
        if f.kind != "numeric":
            continue
        vals = np.array([s.static[g] for s in train.samples], dtype=float)
        static[f.name] = (float(vals.mean()), float(vals.std()))
    mts = {}
    for d, f in enumerate(schema.mts):
        if f.kind == "binary":
            continue
        vals = np.concatenate([s.mts[d] for s in train.samples])
        mts[f.name] = (float(vals.mean()), float(vals.std()))
    return NormStats(static, mts)


def _scale(std: float) -> float:
    return std if std > 0 else 1.0


def apply_normalizer(stats: NormStats, ds: Dataset) -> Dataset:
    schema = ds.schema
    s_aff = [(g, *stats.static[f.name]) for g, f in enumerate(schema.static) if f.name in stats.static]
    m_aff = [(d, *stats.mts[f.name]) for d, f in enumerate(schema.mts) if f.name in stats.mts]
    out = []
    for s in ds.samples:
        static = list(s.static)
        for g, mu, sd in s_aff:
            static[g] = (float(static[g]) - mu) / _scale(sd)
        X = s.mts.copy()
        for d, mu, sd in m_aff:
            X[d] = (X[d] - mu) / _scale(sd)
        out.append(replace(s, static=tuple(static), mts=X))
    return replace(ds, samples=tuple(out), stats=stats)


def invert_normalizer(stats: NormStats, ds: Dataset) -> Dataset:
    schema = ds.schema
    out = []
    for s in ds.samples:
        static = list(s.static)
        for g, f in enumerate(schema.static):
            if f.name in stats.static:
                mu, sd = stats.static[f.name]
                static[g] = float(static[g]) * _scale(sd) + mu
        X = s.mts.copy()
        for d, f in enumerate(schema.mts):
            if f.name in stats.mts:
                mu, sd = stats.mts[f.name]
                X[d] = X[d] * _scale(sd) + mu
        out.append(replace(s, static=tuple(static), mts=X))
    return replace(ds, samples=tuple(out), stats=None)


# ---------------------------------------------------------------------------
# Stratified splitting
# ---------------------------------------------------------------------------


def _stratified_order(labels: np.ndarray, rng: RngStream) -> list[np.ndarray]:
    return [rng.permutation(np.flatnonzero(labels == c)) for c in (0, 1)]


def split_indices(labels, test_fraction: float, seed: int | RngStream) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test fraction must lie in (0, 1)")
    rng = seed if isinstance(seed, RngStream) else RngStream(seed, 0)
    labels = np.asarray(labels)
    train, test = [], []
    for idx in _stratified_order(labels, rng):
        n_test = int(round(test_fraction * len(idx)))
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def kfold_indices(labels, k: int, seed: int | RngStream) -> list[tuple[np.ndarray, np.ndarray]]:
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > len(labels):
        raise ValueError(f"k={k} exceeds the number of samples ({len(labels)})")
    rng = seed if isinstance(seed, RngStream) else RngStream(seed, 0)
    fold_of = np.empty(len(labels), dtype=np.int64)
    offset = 0
    for idx in _stratified_order(labels, rng):
        # continue the round-robin across classes so fold sizes stay balanced
        fold_of[idx] = (np.arange(len(idx)) + offset) % k
        offset = (offset + len(idx)) % k
    folds = []
    for j in range(k):
        val = np.flatnonzero(fold_of == j)
        train = np.flatnonzero(fold_of != j)
        folds.append((train, val))
    return folds


def split(ds: Dataset, test_fraction: float, seed) -> tuple[Dataset, Dataset]:
    tr, te = split_indices(ds.labels, test_fraction, seed)
    return ds.subset(tr), ds.subset(te)


def kfold(ds: Dataset, k: int, seed) -> list[tuple[Dataset, Dataset]]:
    return [(ds.subset(tr), ds.subset(va)) for tr, va in kfold_indices(ds.labels, k, seed)]


# ---------------------------------------------------------------------------
# Dense batch view used by models and post-hoc methods
# ---------------------------------------------------------------------------


@dataclass
class Batch:
    """Padded arrays for a list of samples.

    ``X`` is ``(I, L, D)`` zero-padded past each ``lengths[i]``; ``static_num``
    holds numeric and binary static columns; ``static_cat`` holds vocabulary
    codes of the categorical columns.
    """

    X: np.ndarray
    lengths: np.ndarray
    static_num: np.ndarray
    static_cat: np.ndarray
    y: np.ndarray
    ids: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def mask(self) -> np.ndarray:
        return (np.arange(self.X.shape[1])[None, :] < self.lengths[:, None]).astype(float)

    def take(self, idx) -> "Batch":
        idx = np.asarray(idx)
        return Batch(self.X[idx], self.lengths[idx], self.static_num[idx], self.static_cat[idx],
                     self.y[idx], [self.ids[i] for i in idx] if self.ids else [])

    def copy(self) -> "Batch":
        return Batch(self.X.copy(), self.lengths.copy(), self.static_num.copy(),
                     self.static_cat.copy(), self.y.copy(), list(self.ids))


@dataclass(frozen=True)
class StaticLayout:
    """Where each static feature lives inside a Batch."""

    num_names: tuple[str, ...]
    cat_names: tuple[str, ...]
    cat_sizes: tuple[int, ...]

    @classmethod
    def of(cls, schema: FeatureSchema) -> "StaticLayout":
        num = tuple(f.name for f in schema.static if f.kind != "categorical")
        cats = [f for f in schema.static if f.kind == "categorical"]
        return cls(num, tuple(f.name for f in cats), tuple(len(f.vocab) for f in cats))


def to_batch(ds: Dataset, L: int | None = None) -> Batch:
    schema = ds.schema
    if L is None:
        L = max((s.T for s in ds.samples), default=1)
    I, D = len(ds), schema.D
    X = np.zeros((I, L, D))
    lengths = np.zeros(I, dtype=np.int64)
    num_idx = [g for g, f in enumerate(schema.static) if f.kind != "categorical"]
    cat_idx = [g for g, f in enumerate(schema.static) if f.kind == "categorical"]
    static_num = np.zeros((I, len(num_idx)))
    static_cat = np.zeros((I, len(cat_idx)), dtype=np.int64)
    for i, s in enumerate(ds.samples):
        T = min(s.T, L)
        X[i, :T, :] = s.mts[:, :T].T
        lengths[i] = T
        for j, g in enumerate(num_idx):
            static_num[i, j] = float(s.static[g])
        for j, g in enumerate(cat_idx):
            static_cat[i, j] = schema.static[g].vocab.index(s.static[g])
    return Batch(X, lengths, static_num, static_cat, ds.labels.astype(float), [s.id for s in ds.samples])


def select_features(ds: Dataset, names: Sequence[str]) -> Dataset:
    """Project ``ds`` onto the named static and MTS features (schema order kept)."""
    wanted = set(names)
    unknown = wanted - set(ds.schema.feature_names)
    if unknown:
        raise DataError(f"unknown features {sorted(unknown)}")
    s_idx = [g for g, f in enumerate(ds.schema.static) if f.name in wanted]
    m_idx = [d for d, f in enumerate(ds.schema.mts) if f.name in wanted]
    schema = FeatureSchema(tuple(ds.schema.static[g] for g in s_idx), tuple(ds.schema.mts[d] for d in m_idx))
    samples = tuple(
        PatientSample(s.id, tuple(s.static[g] for g in s_idx), s.mts[m_idx, :], s.label) for s in ds.samples
    )
    stats = None
    if ds.stats is not None:
        stats = NormStats({k: v for k, v in ds.stats.static.items() if k in wanted},
                          {k: v for k, v in ds.stats.mts.items() if k in wanted})
    return Dataset(schema, samples, stats)
