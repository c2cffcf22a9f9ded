from .crossval import (DEFAULT_GRIDS, FAMILIES, CrossFitSpec, CrossFittedScores, brier,
                       fit_model, nested_cv_propensity, predict_proba, stratified_folds)
from .linear import L1, L2, NONE, LinearModel, Penalty, fit_logistic
from .trees import Tree, TreeEnsemble, fit_gradient_boosting, fit_random_forest

__all__ = [
    "CrossFitSpec", "CrossFittedScores", "DEFAULT_GRIDS", "FAMILIES", "L1", "L2", "LinearModel",
    "NONE", "Penalty", "Tree", "TreeEnsemble", "brier", "fit_gradient_boosting", "fit_logistic",
    "fit_model", "fit_random_forest", "nested_cv_propensity", "predict_proba", "stratified_folds",
]
