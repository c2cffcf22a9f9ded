import numpy as np
import pytest

from propcal import DgpConfig, expit, generate
from propcal.errors import ConfigError, ShapeError, StratificationError
from propcal.estimators import CrossFitSpec, brier, nested_cv_propensity, stratified_folds


def test_brier_examples():
    y = np.array([1, 0, 1, 1])
    assert brier(y.astype(float), y) == 0.0
    assert brier(np.full(4, 0.5), y) == 0.25
    assert brier([0.8, 0.4], [1, 0]) == pytest.approx(0.10, abs=1e-15)
    with pytest.raises(ShapeError):
        brier([0.1, 0.2], [1])


def test_stratified_folds_balance_classes():
    a = np.array([1] * 23 + [0] * 77)
    folds = stratified_folds(a, 5, seed=3)
    for k in range(5):
        assert abs(a[folds == k].sum() - 23 / 5) <= 1
    assert np.array_equal(folds, stratified_folds(a, 5, seed=3))


def test_stratification_error():
    with pytest.raises(StratificationError):
        stratified_folds(np.array([1, 1, 0, 0, 0, 0, 0]), 3, seed=0)


def test_spec_validation():
    with pytest.raises(ConfigError):
        CrossFitSpec("bogus")
    with pytest.raises(ConfigError):
        CrossFitSpec("ridge", outer_folds=1)
    with pytest.raises(ConfigError):
        CrossFitSpec("ridge", grid=[])
    assert len(CrossFitSpec("random_forest").grid) == 8
    assert len(CrossFitSpec("gradient_boosting").grid) == 9


@pytest.fixture(scope="module")
def small_data():
    return generate(DgpConfig(n=600, seed=21))


@pytest.mark.parametrize("family,grid", [
    ("logistic", None),
    ("ridge", [{"lam": 0.01}, {"lam": 1.0}]),
    ("lasso", [{"lam": 0.01}, {"lam": 1.0}]),
    ("random_forest", [{"depth": 2, "n_trees": 10}, {"depth": 3, "n_trees": 20}]),
    ("gradient_boosting", [{"depth": 1, "n_trees": 10}, {"depth": 2, "n_trees": 20}]),
])
def test_out_of_fold_guarantee(small_data, family, grid):
    spec = CrossFitSpec(family, outer_folds=3, inner_folds=3, grid=grid, seed=4)
    res = nested_cv_propensity(small_data.covariates, small_data.treatment, spec)
    assert len(res.scores) == small_data.n
    assert res.scores.provenance.family == family
    covered = np.zeros(small_data.n, dtype=int)
    for k, rows in enumerate(res.training_rows):
        held_out = np.flatnonzero(res.fold_assignment == k)
        assert not np.intersect1d(rows, held_out).size
        covered[held_out] += 1
    assert np.all(covered == 1)
    again = nested_cv_propensity(small_data.covariates, small_data.treatment, spec)
    assert np.array_equal(res.scores.values, again.scores.values)


def test_single_point_grid_is_chosen_everywhere(small_data):
    spec = CrossFitSpec("ridge", outer_folds=4, inner_folds=3, grid=[{"lam": 0.1}])
    res = nested_cv_propensity(small_data.covariates, small_data.treatment, spec)
    assert res.chosen_hyperparameters == [{"lam": 0.1}] * 4


def test_selection_picks_lowest_inner_brier(small_data):
    spec = CrossFitSpec("ridge", outer_folds=3, inner_folds=3,
                        grid=[{"lam": 100.0}, {"lam": 0.001}], seed=2)
    res = nested_cv_propensity(small_data.covariates, small_data.treatment, spec)
    for losses, chosen in zip(res.inner_brier, res.chosen_hyperparameters):
        assert chosen == spec.grid[int(np.argmin(losses))]
    assert all(c == {"lam": 0.001} for c in res.chosen_hyperparameters)


def test_ties_resolve_to_first_grid_entry(small_data):
    # lasso with huge penalties gives identical intercept-only models
    spec = CrossFitSpec("lasso", outer_folds=3, inner_folds=3,
                        grid=[{"lam": 50.0}, {"lam": 100.0}])
    res = nested_cv_propensity(small_data.covariates, small_data.treatment, spec)
    assert all(c == {"lam": 50.0} for c in res.chosen_hyperparameters)


def propensity_given_covariates(X, noise_sd=0.5, nodes=60):
    """E[pi | X] by Gauss-Hermite quadrature over the logit noise."""
    z, w = np.polynomial.hermite_e.hermegauss(nodes)
    lin = X @ [-0.1, 0.05, 0.2, -0.05]
    return (expit(lin[:, None] + noise_sd * z[None, :]) * (w / w.sum())).sum(axis=1)


def test_logistic_oof_brier_close_to_truth(dgp10k):
    a = dgp10k.treatment
    res = nested_cv_propensity(dgp10k.covariates, a, CrossFitSpec("logistic"))
    oof = brier(res.scores.values, a)
    best_from_x = propensity_given_covariates(dgp10k.covariates)
    assert abs(oof - brier(best_from_x, a)) < 0.01
    # the remaining gap to the true-pi Brier is the logit noise, unpredictable from X
    noise_part = np.mean((dgp10k.true_propensity - best_from_x) ** 2)
    assert abs(oof - brier(dgp10k.true_propensity, a) - noise_part) < 0.002


def test_permuted_labels_no_better_than_base_rate(dgp10k):
    a = np.random.default_rng(0).permutation(dgp10k.treatment)
    res = nested_cv_propensity(dgp10k.covariates, a, CrossFitSpec("ridge"))
    base = brier(np.full(len(a), a.mean()), a)
    assert brier(res.scores.values, a) >= base - 0.005


def test_stratification_error_propagates():
    X = np.random.default_rng(0).normal(size=(20, 2))
    a = np.array([1, 1] + [0] * 18)
    with pytest.raises(StratificationError):
        nested_cv_propensity(X, a, CrossFitSpec("logistic"))
