"""Group-lasso logistic regression by accelerated proximal gradient (FISTA).

Objective: ``mean(logistic loss) + lam * sum_g ||w_g||_2`` with a free
intercept. Static features are singleton groups (a categorical one-hot block
is one group); each MTS feature contributes one group of ``window`` per-slot
coefficients over the zero-filled windowed series.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..data import Dataset, kfold_indices
from ..metrics import roc_auc
from .report import SelectionReport


class GlassoConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last change {residual:.3e})")
        self.residual = residual


@dataclass
class Design:
    X: np.ndarray
    groups: list[np.ndarray]
    names: list[str]


@dataclass
class GlassoModel:
    coef: np.ndarray
    intercept: float
    lam: float
    groups: list[np.ndarray]
    names: list[str]
    n_iter: int = 0

    def block_norms(self) -> dict[str, float]:
        return {n: float(np.linalg.norm(self.coef[g])) for n, g in zip(self.names, self.groups)}

    def support(self) -> tuple[str, ...]:
        return tuple(n for n, g in zip(self.names, self.groups) if np.any(self.coef[g] != 0.0))

    def decision(self, X: np.ndarray) -> np.ndarray:
        return X @ self.coef + self.intercept


def design_matrix(ds: Dataset, window: int = 14) -> Design:
    schema = ds.schema
    I = len(ds)
    cols, groups, names = [], [], []
    k = 0
    for g, f in enumerate(schema.static):
        if f.kind == "categorical":
            block = np.zeros((I, len(f.vocab)))
            for i, s in enumerate(ds.samples):
                block[i, f.vocab.index(s.static[g])] = 1.0
        else:
            block = np.array([[float(s.static[g])] for s in ds.samples])
        cols.append(block)
        groups.append(np.arange(k, k + block.shape[1]))
        names.append(f.name)
        k += block.shape[1]
    for d, f in enumerate(schema.mts):
        block = np.zeros((I, window))
        for i, s in enumerate(ds.samples):
            T = min(s.T, window)
            block[i, :T] = s.mts[d, :T]
        cols.append(block)
        groups.append(np.arange(k, k + window))
        names.append(f.name)
        k += window
    return Design(np.concatenate(cols, axis=1) if cols else np.zeros((I, 0)), groups, names)


def group_soft_threshold(v: np.ndarray, threshold: float) -> np.ndarray:
    """Proximal map of ``threshold * ||.||_2``: shrink the block norm by ``threshold``."""
    norm = float(np.linalg.norm(v))
    if norm <= threshold:
        return np.zeros_like(v)
    return (1.0 - threshold / norm) * v


def _loss_grad(X, y, w, b):
    z = X @ w + b
    p = expit(z)
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    r = (p - y) / len(y)
    return loss, X.T @ r, float(r.sum())


def _prox(w, groups, t):
    out = w.copy()
    for g in groups:
        out[g] = group_soft_threshold(w[g], t)
    return out


def _penalty(w, groups, lam):
    return lam * sum(float(np.linalg.norm(w[g])) for g in groups)


def glasso_fit(
    X: np.ndarray,
    y: np.ndarray,
    groups: list[np.ndarray],
    lam: float,
    w0: np.ndarray | None = None,
    b0: float | None = None,
    max_iter: int = 20000,
    tol: float = 1e-10,
    names: list[str] | None = None,
) -> GlassoModel:
    """FISTA with function-value restart; stops when the largest parameter change is below ``tol``."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    # Lipschitz constant of the logistic-loss gradient, intercept column included
    lip = (np.linalg.norm(np.column_stack([X, np.ones(n)]), 2) ** 2) / (4.0 * n)
    step = 1.0 / max(lip, 1e-12)
    w = np.zeros(p) if w0 is None else w0.copy()
    if b0 is None:
        ybar = np.clip(y.mean(), 1e-6, 1 - 1e-6)
        b0 = float(np.log(ybar / (1 - ybar)))
    b = b0
    vw, vb, theta = w.copy(), b, 1.0
    obj_prev = np.inf
    change = np.inf
    for it in range(1, max_iter + 1):
        _, gw, gb = _loss_grad(X, y, vw, vb)
        w_new = _prox(vw - step * gw, groups, step * lam)
        b_new = vb - step * gb
        change = max(float(np.max(np.abs(w_new - w), initial=0.0)), abs(b_new - b))
        obj = _loss_grad(X, y, w_new, b_new)[0] + _penalty(w_new, groups, lam)
        if obj > obj_prev:
            # restart momentum, take a plain proximal step from the current iterate
            theta = 1.0
            vw, vb = w, b
            _, gw, gb = _loss_grad(X, y, vw, vb)
            w_new = _prox(vw - step * gw, groups, step * lam)
            b_new = vb - step * gb
            change = max(float(np.max(np.abs(w_new - w), initial=0.0)), abs(b_new - b))
            obj = _loss_grad(X, y, w_new, b_new)[0] + _penalty(w_new, groups, lam)
        theta_new = (1.0 + np.sqrt(1.0 + 4.0 * theta * theta)) / 2.0
        mom = (theta - 1.0) / theta_new
        vw = w_new + mom * (w_new - w)
        vb = b_new + mom * (b_new - b)
        w, b, theta, obj_prev = w_new, b_new, theta_new, obj
        if change < tol:
            return GlassoModel(w, b, lam, groups, names or [str(i) for i in range(len(groups))], it)
    raise GlassoConvergenceError(f"group lasso did not converge in {max_iter} iterations", change)


def kkt_residual(X, y, model: GlassoModel) -> float:
    """Largest violation of the optimality conditions at ``model``.

    Zero block: ``max(0, ||grad_g|| - lam)``. Nonzero block:
    ``||grad_g + lam * w_g / ||w_g|| ||``. Intercept: ``|grad_b|``.
    """
    _, gw, gb = _loss_grad(X, np.asarray(y, float), model.coef, model.intercept)
    worst = abs(gb)
    for g in model.groups:
        wg = model.coef[g]
        nw = np.linalg.norm(wg)
        if nw == 0.0:
            worst = max(worst, float(np.linalg.norm(gw[g])) - model.lam)
        else:
            worst = max(worst, float(np.linalg.norm(gw[g] + model.lam * wg / nw)))
    return max(worst, 0.0)


def lambda_max(X, y, groups) -> float:
    """Smallest lambda for which every block is zero."""
    y = np.asarray(y, float)
    ybar = np.clip(y.mean(), 1e-6, 1 - 1e-6)
    gw = X.T @ (ybar - y) / len(y)
    return max(float(np.linalg.norm(gw[g])) for g in groups)


def lambda_grid(X, y, groups, n: int = 30, ratio: float = 1e-3) -> np.ndarray:
    return lambda_max(X, y, groups) * np.logspace(0.0, np.log10(ratio), n)


def glasso_path(X, y, groups, lams, max_iter: int = 20000, tol: float = 1e-10, names=None) -> list[GlassoModel]:
    """Warm-started fits along ``lams`` (processed in the given order)."""
    models = []
    w0, b0 = None, None
    for lam in lams:
        m = glasso_fit(X, y, groups, float(lam), w0, b0, max_iter, tol, names)
        models.append(m)
        w0, b0 = m.coef, m.intercept
    return models


def glasso_select(
    ds: Dataset,
    lams=None,
    max_iter: int = 20000,
    tol: float = 1e-8,
    window: int = 14,
    k: int = 5,
    seed: int = 0,
) -> tuple[list[GlassoModel], SelectionReport]:
    """Fit the path on ``ds`` and keep the blocks that are nonzero at the CV-best lambda.

    ``lams`` defaults to 30 log-spaced values from ``lambda_max`` down to
    ``1e-3 * lambda_max``. The CV criterion is mean fold validation AUC;
    ties prefer the larger lambda.
    """
    des = design_matrix(ds, window)
    y = ds.labels.astype(float)
    lams = np.sort(np.asarray(lams if lams is not None else lambda_grid(des.X, y, des.groups), float))[::-1]
    folds = kfold_indices(ds.labels, k, seed)
    cv = np.zeros((len(folds), len(lams)))
    for j, (tr, va) in enumerate(folds):
        path = glasso_path(des.X[tr], y[tr], des.groups, lams, max_iter, tol, des.names)
        for li, m in enumerate(path):
            cv[j, li] = roc_auc(m.decision(des.X[va]), y[va]) if np.any(m.coef) else 0.5
    mean_auc = cv.mean(axis=0)
    best = int(np.argmax(mean_auc))
    models = glasso_path(des.X, y, des.groups, lams, max_iter, tol, des.names)
    chosen = models[best]
    report = SelectionReport(
        "GLASSO",
        chosen.support(),
        chosen.block_norms(),
        {"lambda": float(lams[best]), "lambdas": [float(v) for v in lams],
         "cv_auc": [float(v) for v in mean_auc], "window": window, "tol": tol},
    )
    return models, report
