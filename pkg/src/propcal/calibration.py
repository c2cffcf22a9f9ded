"""Platt recalibration and calibration diagnostics (curves, LOESS, ICI)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .dgp import PropensityScores, Provenance, as_scores, expit, logit
from .errors import DomainError, InsufficientDataError, ShapeError
from .estimators.linear import check_labels, fit_logistic

ICI_SPAN = 0.75
ICI_GRID = 200


@dataclass(frozen=True)
class PlattModel:
    """Sigmoid map ``s -> expit(slope * logit(s) + intercept)``."""

    slope: float
    intercept: float

    def __post_init__(self):
        if not (math.isfinite(self.slope) and math.isfinite(self.intercept)):
            raise DomainError("Platt parameters must be finite")


def platt_fit(scores, labels) -> PlattModel:
    s = as_scores(scores)
    if len(s) < 10:
        raise InsufficientDataError(f"Platt scaling needs at least 10 rows, got {len(s)}")
    a = check_labels(labels, len(s))
    model = fit_logistic(logit(s.values)[:, None], a)
    return PlattModel(float(model.coefficients[0]), float(model.intercept))


def platt_apply(model: PlattModel, scores) -> PropensityScores:
    s = as_scores(scores)
    out = expit(model.slope * logit(s.values) + model.intercept)
    return PropensityScores(out, Provenance("post_calibrated", inner=s.provenance))


@numba.njit(cache=True)
def _loess_sorted(xs, ys, grid, k):
    n = xs.shape[0]
    out = np.empty(grid.shape[0])
    for gi in range(grid.shape[0]):
        g = grid[gi]
        # k-th smallest |x - g| by merging outwards from the insertion point
        r = np.searchsorted(xs, g)
        l = r - 1
        h = 0.0
        for _ in range(k):
            if l < 0:
                h = xs[r] - g
                r += 1
            elif r >= n:
                h = g - xs[l]
                l -= 1
            elif g - xs[l] <= xs[r] - g:
                h = g - xs[l]
                l -= 1
            else:
                h = xs[r] - g
                r += 1
        lo = np.searchsorted(xs, g - h, side="left")
        hi = np.searchsorted(xs, g + h, side="right")
        s0 = 0.0
        s1 = 0.0
        s2 = 0.0
        t0 = 0.0
        t1 = 0.0
        for i in range(lo, hi):
            dx = xs[i] - g
            dist = abs(dx)
            if h > 0.0:
                u = dist / h
                if u >= 1.0:
                    continue
                w = (1.0 - u * u * u) ** 3
            elif dist == 0.0:
                w = 1.0
            else:
                continue
            s0 += w
            s1 += w * dx
            s2 += w * dx * dx
            t0 += w * ys[i]
            t1 += w * dx * ys[i]
        det = s0 * s2 - s1 * s1
        if det <= 1e-12 * s0 * s2:
            out[gi] = t0 / s0
        else:
            out[gi] = (s2 * t0 - s1 * t1) / det
    return out


@dataclass(frozen=True, eq=False)
class LoessFit:
    eval_x: np.ndarray
    eval_y: np.ndarray
    span: float

    def __call__(self, x):
        """Linear interpolation between grid points (constant beyond the ends)."""
        return np.interp(x, self.eval_x, self.eval_y)


def loess_smooth(x, y, span=0.75, eval_x=None) -> LoessFit:
    """Local-linear LOESS with tricube weights on the ceil(span*n) nearest neighbours.

    Evaluated at ``eval_x`` (defaults to the sorted unique ``x``). A
    neighbourhood whose weighted x-values are all equal falls back to the
    weighted mean of y.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if len(x) != len(y):
        raise ShapeError(f"x has {len(x)} values, y has {len(y)}")
    n = len(x)
    if n < 10:
        raise InsufficientDataError(f"LOESS needs at least 10 points, got {n}")
    if not 0 < span <= 1:
        raise DomainError(f"span must be in (0, 1], got {span!r}")
    if not np.all(np.isfinite(x)):
        raise DomainError("x must be finite")
    grid = np.unique(x) if eval_x is None else np.asarray(eval_x, dtype=float).reshape(-1)
    if len(grid) > 1 and not np.all(np.diff(grid) > 0):
        raise DomainError("evaluation grid must be strictly increasing")
    k = min(n, int(math.ceil(span * n)))
    order = np.argsort(x, kind="stable")
    out = _loess_sorted(x[order], y[order], grid, k)
    return LoessFit(grid, out, float(span))


def ici(scores, labels, span=ICI_SPAN, grid_size=ICI_GRID) -> float:
    """Integrated Calibration Index: mean |LOESS(labels | score) - score| over observations."""
    s = as_scores(scores).values
    a = check_labels(labels, len(s))
    grid = np.unique(np.quantile(s, np.linspace(0.0, 1.0, grid_size)))
    fit = loess_smooth(s, a, span, grid)
    return float(np.mean(np.abs(fit(s) - s)))


@dataclass(frozen=True, eq=False)
class CalibrationCurve:
    bin_edges: np.ndarray
    mean_predicted: np.ndarray
    observed_rate: np.ndarray
    bin_counts: np.ndarray

    @property
    def populated(self):
        return self.bin_counts > 0

    def max_deviation(self) -> float:
        m = self.populated
        return float(np.max(np.abs(self.observed_rate[m] - self.mean_predicted[m])))


def calibration_curve(scores, labels, n_bins=10, strategy="quantile") -> CalibrationCurve:
    """Reliability curve. Bins are right-closed; the first also holds its left edge.

    Empty bins keep count 0 and NaN coordinates.
    """
    s = np.asarray(scores, dtype=float).reshape(-1)
    a = np.asarray(labels, dtype=float).reshape(-1)
    if len(s) != len(a):
        raise ShapeError(f"{len(s)} scores for {len(a)} labels")
    if n_bins < 1 or len(s) < n_bins:
        raise InsufficientDataError(f"{len(s)} scores cannot fill {n_bins} bins")
    if strategy == "uniform":
        edges = np.linspace(0.0, 1.0, n_bins + 1)
    elif strategy == "quantile":
        inner = np.quantile(s, np.linspace(0.0, 1.0, n_bins + 1)[1:-1])
        edges = np.unique(np.concatenate([[0.0], inner, [1.0]]))
    else:
        raise DomainError(f"unknown binning strategy {strategy!r}")
    k = len(edges) - 1
    idx = np.clip(np.searchsorted(edges, s, side="left") - 1, 0, k - 1)
    counts = np.bincount(idx, minlength=k)
    sum_s = np.bincount(idx, weights=s, minlength=k)
    sum_a = np.bincount(idx, weights=a, minlength=k)
    with np.errstate(divide="ignore", invalid="ignore"):
        mean_pred = np.where(counts > 0, sum_s / counts, np.nan)
        rate = np.where(counts > 0, sum_a / counts, np.nan)
    return CalibrationCurve(edges, mean_pred, rate, counts)
