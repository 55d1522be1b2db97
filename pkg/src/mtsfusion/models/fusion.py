"""Late fusion of a static-data MLP and an MTS GRU at the probability level."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..metrics import MetricError, roc_auc
from .loss import beta_from_labels


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, grad_norm: float):
        super().__init__(f"{message} (final gradient norm {grad_norm:.3e})")
        self.grad_norm = grad_norm


@dataclass(frozen=True)
class LateFusionModel:
    variant: str
    w_mlp: float = 0.0
    w_gru: float = 0.0
    coef: tuple[float, float] = (0.0, 0.0)
    intercept: float = 0.0

    def combine(self, p_mlp, p_gru):
        p_mlp = np.asarray(p_mlp, dtype=float)
        p_gru = np.asarray(p_gru, dtype=float)
        if self.variant == "LFCO":
            return self.w_mlp * p_mlp + self.w_gru * p_gru
        return expit(self.intercept + self.coef[0] * p_mlp + self.coef[1] * p_gru)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "w_mlp": self.w_mlp, "w_gru": self.w_gru,
                "coef": list(self.coef), "intercept": self.intercept}

    @classmethod
    def from_dict(cls, d: dict) -> "LateFusionModel":
        return cls(d["variant"], d["w_mlp"], d["w_gru"], tuple(d["coef"]), d["intercept"])


def lfco_combine(p_mlp, p_gru, w_mlp: float):
    return LateFusionModel("LFCO", w_mlp, 1.0 - w_mlp).combine(p_mlp, p_gru)


def lfco_fit(p_mlp, p_gru, labels, step: float = 0.01) -> LateFusionModel:
    """Exhaustive search of ``w_mlp`` on ``{0, step, ..., 1}``; the first maximizer of AUC wins."""
    y = np.asarray(labels).astype(int)
    if y.min() == y.max():
        raise MetricError("LFCO needs both classes in the validation labels")
    n = int(round(1.0 / step))
    best_w, best_auc = 0.0, -np.inf
    for k in range(n + 1):
        w = min(k / n, 1.0)
        auc = roc_auc(lfco_combine(p_mlp, p_gru, w), y)
        if auc > best_auc:
            best_w, best_auc = w, auc
    return LateFusionModel("LFCO", best_w, 1.0 - best_w)


def lflr_fit(p_mlp, p_gru, labels, ridge: float = 1e-4, max_iter: int = 200, tol: float = 1e-10) -> LateFusionModel:
    """Two-input logistic regression on the sub-model probabilities, BBCE-weighted.

    Fitted by damped Newton steps on the (ridge-stabilized) weighted
    cross-entropy; the intercept is not penalized.
    """
    y = np.asarray(labels, dtype=float)
    beta = beta_from_labels(y).beta
    Z = np.column_stack([np.ones_like(y), np.asarray(p_mlp, float), np.asarray(p_gru, float)])
    sw = np.where(y == 1, beta, 1.0 - beta)
    penalty = np.array([0.0, ridge, ridge])
    theta = np.zeros(3)
    n = len(y)

    def objective(th):
        z = Z @ th
        ll = y * np.logaddexp(0, -z) + (1 - y) * np.logaddexp(0, z)
        return float(np.sum(sw * ll) / n + 0.5 * np.sum(penalty * th**2))

    g = np.full(3, np.inf)
    for _ in range(max_iter):
        p = expit(Z @ theta)
        g = Z.T @ (sw * (p - y)) / n + penalty * theta
        if np.linalg.norm(g) < tol:
            break
        Hm = (Z * (sw * p * (1 - p))[:, None]).T @ Z / n + np.diag(penalty) + 1e-12 * np.eye(3)
        direction = np.linalg.solve(Hm, g)
        f0, t = objective(theta), 1.0
        while objective(theta - t * direction) > f0 - 1e-4 * t * (g @ direction) and t > 1e-10:
            t *= 0.5
        theta = theta - t * direction
    else:
        raise ConvergenceError("LFLR did not converge", float(np.linalg.norm(g)))
    return LateFusionModel("LFLR", coef=(float(theta[1]), float(theta[2])), intercept=float(theta[0]))
