"""Deformation and estimator experiments, pre/post-calibration slopes."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from .calibration import ici, platt_apply, platt_fit
from .causal import ate_error, ipw_ate, ipw_weights, weighted_smd
from .dgp import DEFAULT_SCALES, DgpConfig, deform, generate, replicate_seed
from .errors import ConfigError, DomainError, EstimationError, PairingError
from .estimators import CrossFitSpec, nested_cv_propensity

PRE, POST = "pre", "post"


@dataclass(frozen=True, order=True)
class Condition:
    """``scale=<float>`` or ``estimator=<family>``."""

    kind: str
    value: str

    @classmethod
    def scale(cls, s: float) -> "Condition":
        return cls("scale", repr(float(s)))

    @classmethod
    def estimator(cls, family: str) -> "Condition":
        return cls("estimator", family)

    @classmethod
    def parse(cls, text: str) -> "Condition":
        kind, sep, value = text.partition("=")
        if not sep or kind not in ("scale", "estimator"):
            raise ValueError(f"malformed condition {text!r}")
        if kind == "scale":
            value = repr(float(value))
        return cls(kind, value)

    @property
    def scale_value(self) -> float:
        if self.kind != "scale":
            raise DomainError(f"{self} is not a deformation condition")
        return float(self.value)

    def __str__(self):
        return f"{self.kind}={self.value}"


@dataclass(frozen=True)
class ExperimentRow:
    replicate: int
    condition: Condition
    stage: str
    ici: float
    ate_error: float
    max_asmd: float
    ate_hat: float


@dataclass(frozen=True)
class SlopeSummary:
    condition: Condition
    q1: float
    median: float
    q3: float
    n_valid: int = 0
    median_delta_ici: float = math.nan
    median_delta_ate_error: float = math.nan


def thread_count(default=1) -> int:
    raw = os.environ.get("PROPCAL_THREADS")
    if raw is None:
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"PROPCAL_THREADS must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"PROPCAL_THREADS must be a positive integer, got {raw!r}")
    return value


def measure(scores, X, a, y, true_ate, replicate, condition, stage, estimator="hajek"):
    est = ipw_ate(scores, a, y, estimator)
    balance = weighted_smd(X, a, ipw_weights(scores, a))
    return ExperimentRow(int(replicate), condition, stage, ici(scores, a),
                         ate_error(est, true_ate), balance.max_asmd, est.ate_hat)


def deformation_scores(scale, replicate, n, base_seed):
    """Dataset plus (deformed, recalibrated) scores for one experiment cell."""
    cfg = DgpConfig(n=n, gamma=1.0, seed=replicate_seed(base_seed, float(scale), replicate))
    data = generate(cfg)
    pre = deform(data.scores(), scale)
    post = platt_apply(platt_fit(pre, data.treatment), pre)
    return data, pre, post


def _deformation_cell(args):
    scale, replicate, n, base_seed, estimator = args
    data, pre, post = deformation_scores(scale, replicate, n, base_seed)
    cond = Condition.scale(scale)
    truth = data.true_ate
    return [measure(s, data.covariates, data.treatment, data.outcome, truth,
                    replicate, cond, stage, estimator)
            for s, stage in ((pre, PRE), (post, POST))]


def _run_cells(fn, tasks, threads):
    if threads is None:
        threads = thread_count()
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            # map keeps task order, so output order ignores scheduling
            results = list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * threads))))
    else:
        results = [fn(t) for t in tasks]
    return [row for pair in results for row in pair]


def run_deformation_experiment(scales: Sequence[float] = DEFAULT_SCALES, reps=10, n=10_000,
                               base_seed=0, estimator="hajek", threads=None) -> List[ExperimentRow]:
    """Deform true propensities per scale, measure, Platt-recalibrate, measure again.

    Each (scale, replicate) cell draws its own dataset from a seed derived
    from ``base_seed``, so rows are reproducible and independent of
    ``threads``.
    """
    scales = [float(s) for s in scales]
    if not scales or any(not (math.isfinite(s) and s > 0) for s in scales):
        raise ConfigError(f"scales must be positive, got {scales}")
    if int(reps) != reps or reps < 1:
        raise ConfigError(f"reps must be >= 1, got {reps!r}")
    DgpConfig(n=n).validate()
    tasks = [(s, r, int(n), int(base_seed), estimator) for s in scales for r in range(int(reps))]
    return _run_cells(_deformation_cell, tasks, threads)


def run_estimator_experiment(dataset, specs: Sequence[CrossFitSpec], replicate=0,
                             estimator="hajek") -> List[ExperimentRow]:
    """Nested-CV scores per spec, measured before and after Platt recalibration.

    ``dataset`` needs ``covariates``, ``treatment``, ``outcome`` and the
    potential outcomes ``y0``/``y1`` that define the true ATE.
    """
    y0 = getattr(dataset, "y0", None)
    y1 = getattr(dataset, "y1", None)
    if y0 is None or y1 is None:
        raise EstimationError("dataset has no potential-outcome columns (y0, y1); "
                              "the true ATE is unknown")
    truth = float(np.mean(np.asarray(y1) - np.asarray(y0)))
    X, a, y = dataset.covariates, dataset.treatment, dataset.outcome
    rows = []
    for spec in specs:
        cond = Condition.estimator(spec.family)
        pre = nested_cv_propensity(X, a, spec).scores
        post = platt_apply(platt_fit(pre, a), pre)
        rows.append(measure(pre, X, a, y, truth, replicate, cond, PRE, estimator))
        rows.append(measure(post, X, a, y, truth, replicate, cond, POST, estimator))
    return rows


def slope(pre: ExperimentRow, post: ExperimentRow) -> float:
    """Delta(ate_error) / Delta(ici), post minus pre; NaN when the ici values coincide."""
    if pre.stage != PRE or post.stage != POST:
        raise PairingError(f"expected (pre, post) rows, got ({pre.stage}, {post.stage})")
    if pre.replicate != post.replicate or pre.condition != post.condition:
        raise PairingError("rows belong to different replicates or conditions")
    d_ici = post.ici - pre.ici
    if abs(d_ici) <= 1e-12:
        return math.nan
    return (post.ate_error - pre.ate_error) / d_ici


def pair_rows(rows: Sequence[ExperimentRow]) -> Dict[Condition, List[tuple]]:
    """Group rows into (pre, post) pairs per condition, keeping first-seen order."""
    cells: Dict[tuple, Dict[str, ExperimentRow]] = {}
    for row in rows:
        cell = cells.setdefault((row.condition, row.replicate), {})
        if row.stage in cell:
            raise PairingError(f"duplicate {row.stage} row for {row.condition} "
                               f"replicate {row.replicate}")
        cell[row.stage] = row
    out: Dict[Condition, List[tuple]] = {}
    for (cond, rep), cell in cells.items():
        if set(cell) != {PRE, POST}:
            raise PairingError(f"{cond} replicate {rep} has no {PRE if PRE not in cell else POST} partner")
        out.setdefault(cond, []).append((cell[PRE], cell[POST]))
    return out


def summarize_slopes(rows: Sequence[ExperimentRow]) -> List[SlopeSummary]:
    summaries = []
    for cond, pairs in pair_rows(rows).items():
        slopes = np.array([slope(p, q) for p, q in pairs])
        valid = slopes[np.isfinite(slopes)]
        d_ici = np.array([q.ici - p.ici for p, q in pairs])
        d_err = np.array([q.ate_error - p.ate_error for p, q in pairs])
        if len(valid):
            q1, med, q3 = np.quantile(valid, [0.25, 0.5, 0.75], method="linear")
        else:
            q1 = med = q3 = math.nan
        summaries.append(SlopeSummary(cond, float(q1), float(med), float(q3), len(valid),
                                      float(np.median(d_ici)), float(np.median(d_err))))
    return summaries
