import math

import numpy as np
import pytest

from propcal import DgpConfig, generate, ici
from propcal.errors import EstimationError, PairingError
from propcal.estimators import CrossFitSpec
from propcal.experiments import (Condition, ExperimentRow, deformation_scores, pair_rows,
                                 run_deformation_experiment, run_estimator_experiment, slope,
                                 summarize_slopes)


def row(rep, stage, ici_v, err, cond=Condition.scale(2.0)):
    return ExperimentRow(rep, cond, stage, ici_v, err, 0.1, 5.0 + err)


def test_slope_examples():
    assert slope(row(0, "pre", 0.10, 2.0), row(0, "post", 0.05, 1.0)) == pytest.approx(20.0)
    assert slope(row(0, "pre", 0.10, 2.0), row(0, "post", 0.05, 2.0)) == 0.0
    assert math.isnan(slope(row(0, "pre", 0.1, 2.0), row(0, "post", 0.1, 1.0)))


def test_slope_pairing_checks():
    with pytest.raises(PairingError):
        slope(row(0, "post", 0.1, 1.0), row(0, "pre", 0.1, 1.0))
    with pytest.raises(PairingError):
        slope(row(0, "pre", 0.1, 1.0), row(1, "post", 0.05, 1.0))


def test_summary_quartiles():
    rows = []
    for rep, s in enumerate([1, 2, 3, 4, 5]):
        rows += [row(rep, "pre", 0.2, 1.0), row(rep, "post", 0.1, 1.0 - 0.1 * s)]
    (summary,) = summarize_slopes(rows)
    assert (summary.q1, summary.median, summary.q3) == pytest.approx((2.0, 3.0, 4.0))
    assert summary.n_valid == 5


def test_summary_identical_slopes():
    rows = []
    for rep in range(4):
        rows += [row(rep, "pre", 0.2, 1.0), row(rep, "post", 0.1, 0.5)]
    (s,) = summarize_slopes(rows)
    assert s.q1 == s.median == s.q3 == pytest.approx(5.0)


def test_summary_excludes_undefined_slopes():
    rows = [row(0, "pre", 0.2, 1.0), row(0, "post", 0.1, 0.5),
            row(1, "pre", 0.2, 1.0), row(1, "post", 0.2, 0.5)]
    (s,) = summarize_slopes(rows)
    assert s.n_valid == 1 and s.median == pytest.approx(5.0)


def test_unpaired_rows_rejected():
    with pytest.raises(PairingError):
        summarize_slopes([row(0, "pre", 0.2, 1.0)])
    with pytest.raises(PairingError):
        pair_rows([row(0, "pre", 0.2, 1.0), row(0, "pre", 0.2, 1.0)])


def test_condition_parse_roundtrip():
    for c in (Condition.scale(0.25), Condition.scale(2), Condition.estimator("lasso")):
        assert Condition.parse(str(c)) == c
    with pytest.raises(ValueError):
        Condition.parse("bogus")


@pytest.fixture(scope="module")
def small_run():
    return run_deformation_experiment([0.5, 1.0, 2.0], reps=3, n=2000, base_seed=11)


def test_rows_come_in_ordered_pairs(small_run):
    assert len(small_run) == 3 * 3 * 2
    for pre, post in zip(small_run[::2], small_run[1::2]):
        assert (pre.stage, post.stage) == ("pre", "post")
        assert pre.replicate == post.replicate and pre.condition == post.condition
        assert pre.ici >= 0 and pre.ate_error >= 0 and pre.max_asmd >= 0
    assert all(len(p) == 3 for p in pair_rows(small_run).values())


def test_deformation_run_is_reproducible(small_run):
    again = run_deformation_experiment([0.5, 1.0, 2.0], reps=3, n=2000, base_seed=11)
    assert again == small_run
    other = run_deformation_experiment([0.5], reps=1, n=2000, base_seed=12)
    assert other[0] != small_run[0]


def test_scale_one_pre_uses_true_propensities(small_run):
    data, pre, _ = deformation_scores(1.0, 0, 2000, 11)
    first = next(r for r in small_run if r.condition == Condition.scale(1.0))
    assert first.ici == ici(data.true_propensity, data.treatment)
    assert np.max(np.abs(pre.values - data.true_propensity)) < 1e-12


def test_parallel_matches_serial():
    serial = run_deformation_experiment([0.5, 2.0], reps=2, n=500, base_seed=3, threads=1)
    parallel = run_deformation_experiment([0.5, 2.0], reps=2, n=500, base_seed=3, threads=2)
    assert serial == parallel


@pytest.fixture(scope="module")
def logistic_rows():
    data = generate(DgpConfig(n=10_000, seed=31))
    return run_estimator_experiment(data, [CrossFitSpec("logistic")])


def test_logistic_estimator_barely_changes(logistic_rows):
    pre, post = logistic_rows
    assert pre.ici < 0.03
    assert abs(post.ici - pre.ici) < 0.02


def test_single_point_grid_plumbing():
    data = generate(DgpConfig(n=400, seed=2))
    specs = [CrossFitSpec("random_forest", 3, 3, [{"depth": 2, "n_trees": 5}]),
             CrossFitSpec("gradient_boosting", 3, 3, [{"depth": 1, "n_trees": 5}])]
    rows = run_estimator_experiment(data, specs, replicate=4)
    assert [(r.condition.value, r.stage) for r in rows] == [
        ("random_forest", "pre"), ("random_forest", "post"),
        ("gradient_boosting", "pre"), ("gradient_boosting", "post")]
    assert all(r.replicate == 4 for r in rows)


def test_estimator_experiment_needs_ground_truth():
    class NoTruth:
        covariates = np.zeros((20, 1))
        treatment = np.array([0, 1] * 10)
        outcome = np.zeros(20)
        y0 = None
        y1 = None

    with pytest.raises(EstimationError):
        run_estimator_experiment(NoTruth(), [CrossFitSpec("logistic")])
