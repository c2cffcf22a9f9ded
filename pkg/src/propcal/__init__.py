"""Propensity-score calibration experiments: decalibration, Platt recalibration and IPW."""
from .calibration import (CalibrationCurve, LoessFit, PlattModel, calibration_curve, ici,
                          loess_smooth, platt_apply, platt_fit)
from .causal import (BalanceReport, EffectEstimate, ate_error, ipw_ate, ipw_weights,
                     weighted_smd)
from .dgp import (DEFAULT_SCALES, DgpConfig, PropensityScores, Provenance, SyntheticDataset,
                  deform, expit, generate, logit)
from .experiments import (Condition, ExperimentRow, SlopeSummary, run_deformation_experiment,
                          run_estimator_experiment, slope, summarize_slopes)

__version__ = "0.1.0"
