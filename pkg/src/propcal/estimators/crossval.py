"""Nested cross-validation producing out-of-fold propensity scores."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..dgp import PropensityScores, Provenance, expit
from ..errors import ConfigError, ShapeError, StratificationError
from .linear import L1, L2, LinearModel, check_labels, fit_logistic
from .trees import TreeEnsemble, fit_gradient_boosting, fit_random_forest

FAMILIES = ("logistic", "lasso", "ridge", "random_forest", "gradient_boosting")

LAMBDAS = (1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0)

DEFAULT_GRIDS = {
    "logistic": [{}],
    "lasso": [{"lam": lam} for lam in LAMBDAS],
    "ridge": [{"lam": lam} for lam in LAMBDAS],
    "random_forest": [{"depth": d, "n_trees": t} for d in (2, 3, 5, 8) for t in (100, 300)],
    "gradient_boosting": [{"depth": d, "n_trees": t, "learning_rate": 0.1}
                          for d in (1, 2, 3) for t in (50, 100, 300)],
}


def check_family(family):
    if family not in FAMILIES:
        raise ConfigError(f"unknown estimator family {family!r}; choose from {', '.join(FAMILIES)}")
    return family


@dataclass(frozen=True)
class CrossFitSpec:
    family: str
    outer_folds: int = 5
    inner_folds: int = 5
    grid: Optional[List[Dict]] = None
    seed: int = 0

    def __post_init__(self):
        check_family(self.family)
        if self.grid is None:
            object.__setattr__(self, "grid", [dict(g) for g in DEFAULT_GRIDS[self.family]])
        if self.outer_folds < 2 or self.inner_folds < 2:
            raise ConfigError("outer_folds and inner_folds must be >= 2")
        if not self.grid:
            raise ConfigError("hyperparameter grid must be non-empty")


@dataclass(frozen=True, eq=False)
class CrossFittedScores:
    scores: PropensityScores
    fold_assignment: np.ndarray
    chosen_hyperparameters: List[Dict]
    inner_brier: List[np.ndarray] = field(default_factory=list)
    training_rows: List[np.ndarray] = field(default_factory=list)


def brier(scores, labels) -> float:
    s = np.asarray(scores, dtype=float).reshape(-1)
    y = np.asarray(labels, dtype=float).reshape(-1)
    if len(s) != len(y):
        raise ShapeError(f"{len(s)} scores for {len(y)} labels")
    if len(s) == 0:
        raise ShapeError("brier score of an empty vector")
    return float(np.mean((s - y) ** 2))


def predict_proba(model, X) -> PropensityScores:
    if isinstance(model, LinearModel):
        p = expit(model.decision_function(X))
        family = {"none": "logistic", "l1": "lasso", "l2": "ridge"}[model.penalty.kind]
    elif isinstance(model, TreeEnsemble):
        raw = model.raw_predict(X)
        p = raw if model.kind == "random_forest" else expit(raw)
        family = model.kind
    else:
        raise TypeError(f"cannot predict with {type(model).__name__}")
    return PropensityScores(np.asarray(p, dtype=float), Provenance("estimated", family=family))


def fit_model(family, params, X, a, seed=0):
    if family == "logistic":
        return fit_logistic(X, a)
    if family == "lasso":
        return fit_logistic(X, a, L1(params["lam"]))
    if family == "ridge":
        return fit_logistic(X, a, L2(params["lam"]))
    if family == "random_forest":
        return fit_random_forest(X, a, params["depth"], params["n_trees"], seed=seed)
    if family == "gradient_boosting":
        return fit_gradient_boosting(X, a, params["depth"], params["n_trees"],
                                     params.get("learning_rate", 0.1), seed=seed)
    raise ConfigError(f"unknown estimator family {family!r}")


def stratified_folds(a, k, seed) -> np.ndarray:
    """Fold id per row; each class is shuffled then dealt round-robin."""
    a = np.asarray(a)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    folds = np.empty(len(a), dtype=np.int64)
    for c in (0, 1):
        idx = np.flatnonzero(a == c)
        if len(idx) < k:
            raise StratificationError(f"class {c} has {len(idx)} rows, fewer than {k} folds")
        folds[rng.permutation(idx)] = np.arange(len(idx)) % k
    return folds


def _sub_seed(*keys):
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, dtype=np.uint64)[0])


def _grid_brier(family, grid, X, a, folds, k, seed):
    """Mean inner-CV Brier per grid entry.

    Tree entries that differ only in ``n_trees`` share one fit of the largest
    size, scored through its prefixes.
    """
    losses = np.zeros((len(grid), k))
    groups: Dict[tuple, List[int]] = {}
    for i, params in enumerate(grid):
        key = tuple(sorted((kk, v) for kk, v in params.items() if kk != "n_trees"))
        groups.setdefault(key, []).append(i)
    for fold in range(k):
        train, test = folds != fold, folds == fold
        fit_seed = _sub_seed(seed, fold)
        for members in groups.values():
            if family in ("random_forest", "gradient_boosting"):
                params = dict(grid[members[0]])
                params["n_trees"] = max(grid[i]["n_trees"] for i in members)
                model = fit_model(family, params, X[train], a[train], fit_seed)
                for i in members:
                    sub = model.truncated(grid[i]["n_trees"])
                    losses[i, fold] = brier(predict_proba(sub, X[test]).values, a[test])
            else:
                for i in members:
                    model = fit_model(family, grid[i], X[train], a[train], fit_seed)
                    losses[i, fold] = brier(predict_proba(model, X[test]).values, a[test])
    return losses.mean(axis=1)


def nested_cv_propensity(X, a, spec: CrossFitSpec) -> CrossFittedScores:
    """Out-of-fold propensity scores with inner-CV hyperparameter selection by Brier score."""
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim != 2:
        raise ShapeError(f"X must be 2-D, got shape {X.shape}")
    a = check_labels(a, len(X)).astype(np.int64)
    outer = stratified_folds(a, spec.outer_folds, _sub_seed(spec.seed, 0))
    out = np.empty(len(a))
    chosen, inner_losses, train_rows = [], [], []
    for fold in range(spec.outer_folds):
        train_idx = np.flatnonzero(outer != fold)
        test_idx = np.flatnonzero(outer == fold)
        Xtr, atr = X[train_idx], a[train_idx]
        if len(spec.grid) > 1:
            inner = stratified_folds(atr, spec.inner_folds, _sub_seed(spec.seed, 1, fold))
            losses = _grid_brier(spec.family, spec.grid, Xtr, atr, inner,
                                 spec.inner_folds, _sub_seed(spec.seed, 2, fold))
            best = int(np.argmin(losses))  # first minimum wins ties
        else:
            losses = np.full(1, np.nan)
            best = 0
        params = dict(spec.grid[best])
        model = fit_model(spec.family, params, Xtr, atr, _sub_seed(spec.seed, 3, fold))
        out[test_idx] = predict_proba(model, X[test_idx]).values
        chosen.append(params)
        inner_losses.append(losses)
        train_rows.append(train_idx)
    scores = PropensityScores(out, Provenance("estimated", family=spec.family))
    return CrossFittedScores(scores, outer, chosen, inner_losses, train_rows)
