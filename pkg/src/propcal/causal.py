"""IPW effect estimation and weighted covariate balance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dgp import as_scores
from .errors import BalanceError, DomainError, EstimationError, ShapeError

ESTIMATORS = ("hajek", "horvitz_thompson")


@dataclass(frozen=True)
class EffectEstimate:
    ate_hat: float
    mean_y1_hat: float
    mean_y0_hat: float
    estimator: str = "hajek"


@dataclass(frozen=True, eq=False)
class BalanceReport:
    per_covariate_asmd: np.ndarray
    max_asmd: float
    degenerate: tuple = ()  # covariates with zero pooled variance but unequal means


def _treatment(a, n):
    a = np.asarray(a)
    if a.shape != (n,):
        raise ShapeError(f"treatment vector of shape {a.shape} for {n} rows")
    if not np.all((a == 0) | (a == 1)):
        raise DomainError("treatment must be 0/1")
    return a.astype(float)


def ipw_weights(scores, a) -> np.ndarray:
    s = as_scores(scores).values
    a = _treatment(a, len(s))
    return a / s + (1.0 - a) / (1.0 - s)


def ipw_ate(scores, a, y, estimator="hajek") -> EffectEstimate:
    s = as_scores(scores).values
    a = _treatment(a, len(s))
    y = np.asarray(y, dtype=float)
    if y.shape != s.shape:
        raise ShapeError(f"outcome of shape {y.shape} for {len(s)} scores")
    if a.sum() == 0 or a.sum() == len(a):
        raise EstimationError("both treatment arms must be non-empty")
    w1 = a / s
    w0 = (1.0 - a) / (1.0 - s)
    if estimator == "hajek":
        m1 = float(np.sum(w1 * y) / np.sum(w1))
        m0 = float(np.sum(w0 * y) / np.sum(w0))
    elif estimator == "horvitz_thompson":
        m1 = float(np.mean(w1 * y))
        m0 = float(np.mean(w0 * y))
    else:
        raise DomainError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")
    return EffectEstimate(m1 - m0, m1, m0, estimator)


def ate_error(estimate: EffectEstimate, true_ate: float) -> float:
    return abs(estimate.ate_hat - float(true_ate))


def _weighted_moments(X, w):
    mu = w @ X / w.sum()
    var = w @ (X - mu) ** 2 / w.sum()
    return mu, var


def weighted_smd(X, a, weights) -> BalanceReport:
    """Absolute standardized mean difference per covariate after weighting.

    Group means and variances are weight-normalized within each arm; the
    denominator pools the two weighted variances.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    a = _treatment(a, n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ShapeError(f"weights of shape {w.shape} for {n} rows")
    if np.any(~(w > 0)):
        raise DomainError("weights must be positive")
    t, c = a == 1, a == 0
    if not t.any() or not c.any():
        raise BalanceError("both treatment groups must be non-empty")
    mu1, var1 = _weighted_moments(X[t], w[t])
    mu0, var0 = _weighted_moments(X[c], w[c])
    diff = np.abs(mu1 - mu0)
    pooled = np.sqrt((var1 + var0) / 2.0)
    scale = np.maximum(np.abs(mu1), np.abs(mu0))
    same = diff <= 1e-12 * np.maximum(scale, 1.0)
    zero = pooled == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        asmd = np.where(zero, np.where(same, 0.0, np.inf), diff / pooled)
    degenerate = tuple(int(j) for j in np.flatnonzero(zero & ~same))
    return BalanceReport(asmd, float(asmd.max()), degenerate)
