"""Logistic regression fitted by IRLS (plain and ridge) or IRLS + coordinate descent (lasso).

The objective is the *mean* log-loss over rows plus the penalty on the
standardized coefficients: ``lam/2 * ||b||^2`` for ridge, ``lam * ||b||_1``
for lasso. The intercept is never penalized.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..dgp import expit
from ..errors import BoundaryWarning, DegenerateLabelsError, DomainError, ShapeError

MAX_IRLS_ITER = 100
DEVIANCE_TOL = 1e-8
BOUNDARY_NORM = 1e6
SEPARATION_DEVIANCE = 1e-6


@dataclass(frozen=True)
class Penalty:
    kind: str  # "none", "l1" or "l2"
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "l1", "l2"):
            raise DomainError(f"unknown penalty kind {self.kind!r}")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise DomainError(f"penalty strength must be >= 0, got {self.lam!r}")


NONE = Penalty("none")


def L1(lam: float) -> Penalty:
    return Penalty("l1", float(lam))


def L2(lam: float) -> Penalty:
    return Penalty("l2", float(lam))


@dataclass(frozen=True, eq=False)
class LinearModel:
    intercept: float
    coefficients: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    penalty: Penalty = NONE

    @property
    def n_features(self):
        return len(self.coefficients)

    def standardized_coefficients(self):
        return self.coefficients * self.sds

    def decision_function(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ShapeError(
                f"expected a matrix with {self.n_features} columns, got shape {X.shape}"
            )
        return self.intercept + X @ self.coefficients


def check_labels(a, n=None):
    a = np.asarray(a)
    if a.ndim != 1:
        raise ShapeError("labels must be a vector")
    if n is not None and len(a) != n:
        raise ShapeError(f"{len(a)} labels for {n} rows")
    if not np.all((a == 0) | (a == 1)):
        raise DomainError("labels must be 0/1")
    a = a.astype(float)
    if a.min() == a.max():
        raise DegenerateLabelsError(f"labels contain a single class ({int(a[0])})")
    return a


def _standardize(X):
    means = X.mean(axis=0)
    sds = X.std(axis=0)
    active = sds > 1e-12 * np.maximum(np.abs(means), 1.0)
    sds = np.where(active, sds, 1.0)
    return means, sds, active


def _mean_logloss(eta, a):
    # log(1 + e^eta) - a * eta, stable for both signs
    return float(np.mean(np.logaddexp(0.0, eta) - a * eta))


def fit_logistic(X, a, penalty: Optional[Penalty] = None) -> LinearModel:
    """Fit a (optionally penalized) logistic regression of ``a`` on ``X``."""
    penalty = NONE if penalty is None else penalty
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ShapeError(f"X must be 2-D, got shape {X.shape}")
    n, d = X.shape
    a = check_labels(a, n)
    if penalty.kind == "none" and n <= d:
        raise ShapeError(f"unpenalized fit needs n > d (n={n}, d={d})")

    means, sds, active = _standardize(X)
    Z = (X[:, active] - means[active]) / sds[active]

    if penalty.kind == "l1":
        b0, beta = _fit_lasso(Z, a, penalty.lam)
    else:
        lam = penalty.lam if penalty.kind == "l2" else 0.0
        b0, beta = _fit_irls(Z, a, lam)
        if penalty.kind == "none" and 2.0 * n * _mean_logloss(b0 + Z @ beta, a) < SEPARATION_DEVIANCE:
            # converged to a saturated fit: the MLE lies at infinity
            warnings.warn("training deviance vanished: the classes are perfectly separated",
                          BoundaryWarning, stacklevel=2)

    coef_std = np.zeros(d)
    coef_std[active] = beta
    coef = coef_std / sds
    norm = float(np.linalg.norm(coef))
    if not np.isfinite(norm) or norm > BOUNDARY_NORM:
        warnings.warn(
            "logistic fit diverges towards the boundary (perfect separation?); "
            "coefficients clamped", BoundaryWarning, stacklevel=2)
        coef = np.nan_to_num(coef, nan=0.0, posinf=BOUNDARY_NORM, neginf=-BOUNDARY_NORM)
        norm = float(np.linalg.norm(coef))
        if norm > BOUNDARY_NORM:
            coef = coef * (BOUNDARY_NORM / norm)
        b0 = float(np.clip(b0, -BOUNDARY_NORM, BOUNDARY_NORM))
    intercept = float(b0 - np.sum(coef * means))
    return LinearModel(intercept, coef, means, sds, penalty)


def _fit_irls(Z, a, lam):
    """Newton-Raphson with step halving on mean log-loss + lam/2 ||beta||^2."""
    n, k = Z.shape
    Zt = np.column_stack([np.ones(n), Z])
    pen = np.full(k + 1, lam)
    pen[0] = 0.0
    rate = a.mean()
    theta = np.zeros(k + 1)
    theta[0] = np.log(rate) - np.log1p(-rate)

    def objective(th):
        return _mean_logloss(Zt @ th, a) + 0.5 * float(np.sum(pen * th * th))

    obj = objective(theta)
    for _ in range(MAX_IRLS_ITER):
        p = expit(Zt @ theta)
        w = p * (1.0 - p)
        grad = Zt.T @ (p - a) / n + pen * theta
        hess = (Zt.T * w) @ Zt / n + np.diag(pen)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = theta - t * step
            cand_obj = objective(cand)
            if cand_obj <= obj + 1e-15 * abs(obj) or t < 1e-10:
                break
            t *= 0.5
        # deviance = 2 n * mean log-loss
        delta_dev = 2.0 * n * abs(obj - cand_obj)
        theta, obj = cand, cand_obj
        if delta_dev < DEVIANCE_TOL or np.linalg.norm(theta[1:]) > BOUNDARY_NORM:
            break
    return float(theta[0]), theta[1:]


def soft_threshold(x, t):
    return np.sign(x) * max(abs(x) - t, 0.0)


def _fit_lasso(Z, a, lam, outer_tol=1e-11, inner_tol=1e-13, max_outer=200, max_inner=10000):
    """Coordinate descent on the IRLS quadratic approximation (glmnet-style)."""
    n, k = Z.shape
    rate = a.mean()
    b0 = np.log(rate) - np.log1p(-rate)
    beta = np.zeros(k)
    for _ in range(max_outer):
        eta = b0 + Z @ beta
        p = expit(eta)
        w = np.maximum(p * (1.0 - p), 1e-5)
        z = eta + (a - p) / w
        b0_old, beta_old = b0, beta.copy()
        r = z - eta  # working residual
        wsum = w.sum() / n
        colsq = (w @ (Z * Z)) / n
        for _ in range(max_inner):
            max_change = 0.0
            delta = np.sum(w * r) / n / wsum
            b0 += delta
            r -= delta
            max_change = abs(delta)
            for j in range(k):
                if colsq[j] == 0.0:
                    continue
                zj = Z[:, j]
                rho = np.dot(w * zj, r) / n + colsq[j] * beta[j]
                new = soft_threshold(rho, lam) / colsq[j]
                change = new - beta[j]
                if change != 0.0:
                    r -= change * zj
                    beta[j] = new
                    max_change = max(max_change, abs(change))
            if max_change < inner_tol:
                break
        if max(abs(b0 - b0_old), float(np.max(np.abs(beta - beta_old), initial=0.0))) < outer_tol:
            break
    return float(b0), beta


def logloss_gradient(model: LinearModel, X, a):
    """Gradient of the mean log-loss w.r.t. (intercept, standardized coefficients)."""
    X = np.asarray(X, dtype=float)
    a = np.asarray(a, dtype=float)
    p = expit(model.decision_function(X))
    Z = (X - model.means) / model.sds
    resid = p - a
    return float(resid.mean()), Z.T @ resid / len(a)
