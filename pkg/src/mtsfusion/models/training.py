"""Training with BBCE + Adam + early stopping, cross-validated grid search, model serialization."""
from __future__ import annotations

import hashlib
import itertools
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import torch
from torch import nn

from ..data import Batch, Dataset, FeatureSchema, NormStats, StaticLayout, kfold_indices, to_batch
from ..metrics import roc_auc
from ..numerics import DTYPE, ParamSet, RngStream, adam_step
from .archs import build_network
from .layers import Dropout, TensorBatch, init_params
from .loss import bbce, beta_from_labels

log = logging.getLogger(__name__)

LR_GRID = (0.0001, 0.001, 0.01, 0.1)
DROPOUT_GRID = (0.0, 0.1, 0.2, 0.3)
WIDTH_GRID = (3, 5, 8, 10, 15, 20, 25, 30, 35, 40, 50)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class HyperParams:
    lr: float = 0.01
    dropout: float = 0.0
    width: int = 10
    max_epochs: int = 300
    patience: int = 10
    batch_size: int = 64
    min_delta: float = 1e-5

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.width < 1 or self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("width, max_epochs and batch_size must be positive")


@dataclass(frozen=True)
class Grids:
    lr: tuple[float, ...] = LR_GRID
    dropout: tuple[float, ...] = DROPOUT_GRID
    width: tuple[int, ...] = WIDTH_GRID

    def points(self, base: HyperParams) -> list[HyperParams]:
        """Grid points in deterministic order: learning rate major, width minor."""
        if not (self.lr and self.dropout and self.width):
            raise ValueError("hyperparameter grids must be nonempty")
        return [replace(base, lr=lr, dropout=dr, width=w)
                for lr, dr, w in itertools.product(self.lr, self.dropout, self.width)]


class EarlyStopper:
    """Stops after ``patience`` consecutive epochs without a ``min_delta`` improvement."""

    def __init__(self, patience: int, min_delta: float = 1e-5):
        self.patience = patience
        self.min_delta = min_delta
        self.best = np.inf
        self.best_epoch = 0
        self.bad = 0

    def update(self, epoch: int, cost: float) -> tuple[bool, bool]:
        """Record ``cost`` for ``epoch``; returns ``(improved, stop)``."""
        if np.isfinite(cost) and cost < self.best - self.min_delta:
            self.best, self.best_epoch, self.bad = cost, epoch, 0
            return True, False
        self.bad += 1
        return False, self.bad >= self.patience


@dataclass
class TrainedModel:
    arch: str
    hp: HyperParams
    network: nn.Module
    schema: FeatureSchema
    window: int
    stats: NormStats | None = None
    beta: float = 0.5
    best_epoch: int = 0
    history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.network.eval()

    def forward(self, tb: TensorBatch) -> torch.Tensor:
        return self.network(tb)

    def predict(self, data: Dataset | Batch | TensorBatch) -> np.ndarray:
        if isinstance(data, Dataset):
            data = to_batch(data, self.window)
        if isinstance(data, Batch):
            data = TensorBatch.of(data)
        self.network.eval()
        with torch.no_grad():
            return self.network(data).numpy().astype(np.float64)

    def parameters(self) -> dict[str, np.ndarray]:
        return {n: p.detach().numpy().copy() for n, p in self.network.named_parameters()}

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for n, p in self.network.named_parameters():
            h.update(n.encode())
            h.update(p.detach().numpy().tobytes())
        return h.hexdigest()

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "arch": self.arch,
            "schema_fingerprint": self.schema.fingerprint(),
            "schema": self.schema.to_dict(),
            "window": self.window,
            "hyperparams": asdict(self.hp),
            "normalization": self.stats.to_dict() if self.stats else None,
            "beta": self.beta,
            "best_epoch": self.best_epoch,
            "history": list(self.history),
            "parameters": {
                n: {"shape": list(p.shape), "values": p.detach().numpy().ravel().tolist()}
                for n, p in self.network.named_parameters()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        schema = FeatureSchema.from_dict(d["schema"])
        if schema.fingerprint() != d["schema_fingerprint"]:
            raise ValueError("schema fingerprint mismatch")
        hp = HyperParams(**d["hyperparams"])
        net = build_network(d["arch"], StaticLayout.of(schema), schema.D, d["window"], hp.width, hp.dropout)
        params = dict(net.named_parameters())
        with torch.no_grad():
            for n, rec in d["parameters"].items():
                params[n].copy_(torch.tensor(rec["values"], dtype=DTYPE).reshape(rec["shape"]))
        stats = NormStats.from_dict(d["normalization"]) if d.get("normalization") else None
        return cls(d["arch"], hp, net, schema, d["window"], stats, d["beta"], d["best_epoch"], list(d["history"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "TrainedModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _set_dropout_generator(net: nn.Module, gen: torch.Generator | None) -> None:
    for m in net.modules():
        if isinstance(m, Dropout):
            m.generator = gen


def fit_network(
    net: nn.Module,
    train: TensorBatch,
    val: TensorBatch,
    hp: HyperParams,
    beta: float,
    rng: RngStream,
) -> tuple[int, list[float]]:
    """Adam on BBCE with early stopping; leaves ``net`` holding its best-validation parameters."""
    params = ParamSet.from_module(net)
    stopper = EarlyStopper(hp.patience, hp.min_delta)
    best_state = params.snapshot()
    history: list[float] = []
    _set_dropout_generator(net, rng.torch_generator())
    n = len(train)
    for epoch in range(1, hp.max_epochs + 1):
        net.train()
        order = rng.permutation(n)
        for start in range(0, n, hp.batch_size):
            mb = train.take(order[start : start + hp.batch_size])
            params.zero_grad()
            loss = bbce(net(mb), mb.y, beta)
            loss.backward()
            adam_step(params, params.grads(), hp.lr)
        net.eval()
        with torch.no_grad():
            p = net(val)
            cost = float(bbce(p, val.y, beta)) if torch.isfinite(p).all() else np.inf
        history.append(cost)
        improved, stop = stopper.update(epoch, cost)
        if improved:
            best_state = params.snapshot()
        if stop or not np.isfinite(cost):
            break
    params.load(best_state)
    params.zero_grad()
    _set_dropout_generator(net, None)
    net.eval()
    return stopper.best_epoch, history


def train(
    arch: str,
    hp: HyperParams,
    train_ds: Dataset,
    val_ds: Dataset,
    seed: int | RngStream = 0,
    window: int = 14,
) -> TrainedModel:
    """Train one architecture; ``beta`` is taken from the training labels."""
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise TrainingError("train and validation sets must be nonempty")
    rng = seed if isinstance(seed, RngStream) else RngStream(seed, 0)
    schema = train_ds.schema
    beta = beta_from_labels(train_ds.labels).beta
    net = build_network(arch, StaticLayout.of(schema), schema.D, window, hp.width, hp.dropout)
    init_params(net, rng.child(0))
    best_epoch, history = fit_network(
        net, TensorBatch.of(to_batch(train_ds, window)), TensorBatch.of(to_batch(val_ds, window)),
        hp, beta, rng.child(1),
    )
    return TrainedModel(arch, hp, net, schema, window, train_ds.stats, beta, best_epoch, history)


def _safe_auc(p: np.ndarray, y: np.ndarray) -> float:
    if not np.all(np.isfinite(p)):
        return 0.0
    return roc_auc(p, y)


def cv_scores(
    arch: str,
    train_ds: Dataset,
    grids: Grids,
    base: HyperParams = HyperParams(),
    k: int = 5,
    seed: int = 0,
    window: int = 14,
    workers: int = 1,
) -> list[tuple[HyperParams, float]]:
    """Mean validation ROC AUC over ``k`` stratified folds for every grid point."""
    root = RngStream(seed, 0xC5)
    folds = kfold_indices(train_ds.labels, k, root.child(0))
    points = grids.points(base)

    def task(args):
        pi, fi = args
        tr, va = folds[fi]
        model = train(arch, points[pi], train_ds.subset(tr), train_ds.subset(va),
                      root.child(1).child(pi).child(fi), window)
        sub = train_ds.subset(va)
        return _safe_auc(model.predict(sub), sub.labels)

    jobs = [(pi, fi) for pi in range(len(points)) for fi in range(len(folds))]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            aucs = list(ex.map(task, jobs))
    else:
        aucs = [task(j) for j in jobs]
    table = np.array(aucs).reshape(len(points), len(folds))
    return [(pt, float(table[i].mean())) for i, pt in enumerate(points)]


def cv_select(
    arch: str,
    train_ds: Dataset,
    grids: Grids,
    base: HyperParams = HyperParams(),
    k: int = 5,
    seed: int = 0,
    window: int = 14,
    workers: int = 1,
) -> HyperParams:
    """Grid point with the best mean fold AUC; ties go to the earliest point."""
    scores = cv_scores(arch, train_ds, grids, base, k, seed, window, workers)
    best, best_auc = scores[0]
    for pt, auc in scores[1:]:
        if auc > best_auc:
            best, best_auc = pt, auc
    log.info("cv_select %s: best %s (AUC %.4f)", arch, best, best_auc)
    return best


def single_grid(hp: HyperParams) -> Grids:
    return Grids((hp.lr,), (hp.dropout,), (hp.width,))
