"""Command-line entry point: ``propcal simulate | fit | report``.

Exit codes: 0 success, 1 validation error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import itertools
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from . import io
from .calibration import calibration_curve, ici, loess_smooth, platt_apply, platt_fit
from .dgp import DEFAULT_SCALES, DgpConfig, generate, replicate_seed
from .errors import ConfigError, ParseError, PropcalError
from .estimators import DEFAULT_GRIDS, FAMILIES, CrossFitSpec, nested_cv_propensity
from .experiments import (deformation_scores, run_deformation_experiment,
                          run_estimator_experiment, summarize_slopes, thread_count)

log = logging.getLogger("propcal")

COMMON_KEYS = {"seed", "out"}
KEYS = {
    "simulate": COMMON_KEYS | {"scales", "reps", "n", "scores_out", "estimator"},
    "fit": COMMON_KEYS | {"data", "synthetic", "estimators", "outer_folds", "inner_folds",
                          "n", "reps", "scores_out", "estimator"},
    "report": {"in", "out", "n_bins", "strategy"},
}


class UsageError(ConfigError):
    def __init__(self, message, usage=""):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, self.format_usage())


@dataclass
class RunConfig:
    kind: str
    seed: int = 0
    out: Optional[str] = None
    scales: Tuple[float, ...] = DEFAULT_SCALES
    reps: int = 10
    n: int = 10_000
    estimator: str = "hajek"
    scores_out: Optional[str] = None
    data: Optional[str] = None
    synthetic: bool = False
    estimators: Tuple[str, ...] = FAMILIES
    outer_folds: int = 5
    inner_folds: int = 5
    grids: Dict[str, List[dict]] = field(default_factory=dict)
    input: Optional[str] = None
    n_bins: int = 10
    strategy: str = "quantile"

    def validate(self):
        if self.kind in ("simulate", "fit"):
            if self.reps < 1:
                raise ConfigError(f"reps must be >= 1, got {self.reps}")
            if not 0 <= self.seed < 2**64:
                raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
            if self.estimator not in ("hajek", "horvitz_thompson"):
                raise ConfigError(f"estimator must be hajek or horvitz_thompson, got {self.estimator!r}")
            DgpConfig(n=self.n).validate()
        if self.kind == "simulate":
            if not self.scales or any(not s > 0 for s in self.scales):
                raise ConfigError(f"scales must be positive, got {list(self.scales)}")
        if self.kind == "fit":
            if (self.data is None) == (not self.synthetic):
                raise ConfigError("fit needs exactly one of --data or --synthetic")
            for fam in self.estimators:
                if fam not in FAMILIES:
                    raise ConfigError(f"unknown estimator {fam!r}; choose from {', '.join(FAMILIES)}")
            if not self.estimators:
                raise ConfigError("no estimators given")
            for fam in self.grids:
                if fam not in FAMILIES:
                    raise ConfigError(f"grid given for unknown estimator {fam!r}")
            self.specs()  # CrossFitSpec checks fold counts and grids
            if self.data is not None and not Path(self.data).is_file():
                raise ConfigError(f"data file {self.data} does not exist")
        if self.kind == "report":
            if self.input is None:
                raise ConfigError("report needs --in")
            if not Path(self.input).is_file():
                raise ConfigError(f"input file {self.input} does not exist")
            if self.n_bins < 1:
                raise ConfigError(f"n_bins must be >= 1, got {self.n_bins}")
            if self.strategy not in ("quantile", "uniform"):
                raise ConfigError(f"strategy must be quantile or uniform, got {self.strategy!r}")
        for target in (self.out if self.kind != "report" else None, self.scores_out):
            if target is not None and not Path(target).resolve().parent.is_dir():
                raise ConfigError(f"output directory for {target} does not exist")
        if self.kind == "report" and self.out is not None:
            out = Path(self.out)
            if out.exists() and not out.is_dir():
                raise ConfigError(f"--out {out} exists and is not a directory")
            if not out.resolve().parent.is_dir():
                raise ConfigError(f"parent directory of {out} does not exist")

    def specs(self) -> List[CrossFitSpec]:
        return [CrossFitSpec(fam, self.outer_folds, self.inner_folds,
                             self.grids.get(fam, [dict(g) for g in DEFAULT_GRIDS[fam]]), self.seed)
                for fam in self.estimators]


def _number(text):
    try:
        return int(text)
    except ValueError:
        return float(text)


def parse_grid(text) -> List[dict]:
    """``depth=2|3, n_trees=100|300`` -> cartesian product, in the order written."""
    axes = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        name, sep, values = part.partition("=")
        if not sep or not name.strip() or not values.strip():
            raise ConfigError(f"malformed grid axis {part!r}; expected name=v1|v2")
        try:
            axes.append((name.strip(), [_number(v.strip()) for v in values.split("|")]))
        except ValueError:
            raise ConfigError(f"non-numeric value in grid axis {part!r}") from None
    if not axes:
        raise ConfigError(f"empty grid {text!r}")
    names = [a[0] for a in axes]
    return [dict(zip(names, combo)) for combo in itertools.product(*(a[1] for a in axes))]


def _build_parser():
    p = _Parser(prog="propcal", description="Propensity-score calibration experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="deformation / recalibration experiment")
    sim.add_argument("--scales", help="comma-separated deformation scales")
    sim.add_argument("--reps", type=int)
    sim.add_argument("--n", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--estimator", help="hajek or horvitz_thompson")
    sim.add_argument("--out", help="results CSV")
    sim.add_argument("--scores-out", help="per-individual scores of replicate 0 (CSV)")
    sim.add_argument("--config")

    fit = sub.add_parser("fit", help="estimator experiment with nested cross-validation")
    src = fit.add_mutually_exclusive_group()
    src.add_argument("--data", help="dataset CSV with columns a, y, y0, y1 and covariates")
    src.add_argument("--synthetic", action="store_true", default=None,
                     help="draw datasets from the built-in generator")
    fit.add_argument("--estimators", help=f"comma-separated subset of {','.join(FAMILIES)}")
    fit.add_argument("--outer-folds", type=int)
    fit.add_argument("--inner-folds", type=int)
    fit.add_argument("--n", type=int, help="rows per synthetic dataset")
    fit.add_argument("--reps", type=int, help="number of synthetic datasets")
    fit.add_argument("--seed", type=int)
    fit.add_argument("--estimator", help="hajek or horvitz_thompson")
    fit.add_argument("--out", help="results CSV")
    fit.add_argument("--scores-out", help="per-individual scores of the first dataset (CSV)")
    fit.add_argument("--config")

    rep = sub.add_parser("report", help="slope summaries or calibration curves from a CSV")
    rep.add_argument("--in", dest="input", help="results CSV or per-individual scores CSV")
    rep.add_argument("--out", help="output directory")
    rep.add_argument("--n-bins", type=int)
    rep.add_argument("--strategy", help="quantile or uniform")
    rep.add_argument("--config")
    return p


def _from_file(kind, path) -> dict:
    raw = io.read_config(path)
    values, grids = {}, {}
    for key, text in raw.items():
        norm = key.replace("-", "_")
        if kind == "fit" and norm.startswith("grid."):
            grids[norm[5:]] = parse_grid(text)
            continue
        if norm not in KEYS[kind]:
            raise ConfigError(f"{path}: unknown key {key!r} for {kind}")
        values["input" if norm == "in" else norm] = text
    if grids:
        values["grids"] = grids
    return values


def _coerce(name, value):
    if not isinstance(value, str):
        return value
    try:
        if name in ("reps", "n", "seed", "outer_folds", "inner_folds", "n_bins"):
            return int(value)
        if name == "scales":
            return tuple(float(v) for v in value.split(",") if v.strip())
        if name == "estimators":
            return tuple(v.strip() for v in value.split(",") if v.strip())
        if name == "synthetic":
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return value.lower() in ("true", "1", "yes")
    except ValueError:
        raise ConfigError(f"malformed value for {name}: {value!r}") from None
    return value


def parse_args(argv) -> RunConfig:
    ns = _build_parser().parse_args(argv)
    kind = ns.command
    merged = {}
    if ns.config is not None:
        merged.update(_from_file(kind, ns.config))
    for key, value in vars(ns).items():
        if key in ("command", "config") or value is None:
            continue
        merged[key] = value
    if kind == "fit" and "data" in merged and ns.synthetic:
        merged.pop("data")
    if kind == "fit" and ns.data is not None:
        merged.pop("synthetic", None)
    cfg = RunConfig(kind=kind, **{k: _coerce(k, v) for k, v in merged.items()})
    if kind == "simulate" and cfg.out is None:
        cfg.out = "simulate_results.csv"
    if kind == "fit" and cfg.out is None:
        cfg.out = "fit_results.csv"
    if kind == "report" and cfg.out is None:
        cfg.out = "report"
    cfg.validate()
    return cfg


def _simulate(cfg: RunConfig):
    rows = run_deformation_experiment(cfg.scales, cfg.reps, cfg.n, cfg.seed, cfg.estimator)
    io.write_results_csv(rows, cfg.out)
    log.info("wrote %d rows to %s", len(rows), cfg.out)
    if cfg.scores_out:
        # each scale draws its own dataset, so each carries its own label column
        cols, first = {}, None
        for s in cfg.scales:
            data, pre, post = deformation_scores(s, 0, cfg.n, cfg.seed)
            first = data.treatment if first is None else first
            prefix = f"scale={s!r}"
            cols[f"{prefix}:a"] = data.treatment
            cols[f"{prefix}:true"] = data.true_propensity
            cols[f"{prefix}:pre"] = pre.values
            cols[f"{prefix}:post"] = post.values
        io.write_scores_csv(first, cols, cfg.scores_out)


def _fit(cfg: RunConfig):
    specs = cfg.specs()
    if cfg.data is not None:
        datasets = [io.read_dataset_csv(cfg.data)]
    else:
        datasets = [generate(DgpConfig(n=cfg.n, gamma=1.0,
                                       seed=replicate_seed(cfg.seed, "synthetic", r)))
                     for r in range(cfg.reps)]
    rows = []
    for r, data in enumerate(datasets):
        rows.extend(run_estimator_experiment(data, specs, replicate=r, estimator=cfg.estimator))
        log.info("dataset %d done", r)
    io.write_results_csv(rows, cfg.out)
    if cfg.scores_out:
        data = datasets[0]
        cols = {}
        if getattr(data, "true_propensity", None) is not None:
            cols["pi_true"] = data.true_propensity
        for spec in specs:
            pre = nested_cv_propensity(data.covariates, data.treatment, spec).scores
            cols[f"{spec.family}:pre"] = pre.values
            cols[f"{spec.family}:post"] = platt_apply(platt_fit(pre, data.treatment), pre).values
        io.write_scores_csv(data.treatment, cols, cfg.scores_out)


def _report(cfg: RunConfig):
    out = Path(cfg.out)
    _, header, _ = io._read_table(cfg.input)
    if "stage" in header:
        rows = io.read_results_csv(cfg.input)
        out.mkdir(exist_ok=True)
        io.write_slopes_csv(summarize_slopes(rows), out / "slopes.csv")
        return
    if "a" not in header:
        raise ParseError(f"{cfg.input}: neither a results file (stage column) "
                         "nor a scores file (a column)")
    labels, cols = io.read_scores_csv(cfg.input)
    label_cols = {k: v for k, v in cols.items() if k.endswith(":a")}
    curves, fits, summary = {}, {}, []
    for name, scores in cols.items():
        if name in label_cols:
            continue
        a = label_cols.get(name.rsplit(":", 1)[0] + ":a", labels)
        curves[name] = calibration_curve(scores, a, cfg.n_bins, cfg.strategy)
        fits[name] = loess_smooth(scores, a, 0.75)
        summary.append((name, ici(scores, a)))
    out.mkdir(exist_ok=True)
    io.write_curves_csv(curves, out / "calibration_curves.csv")
    io.write_loess_csv(fits, out / "loess_curves.csv")
    io._write(out / "ici.csv", ("score", "ici"), ([n, io.fmt(v)] for n, v in summary))


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        thread_count()
        cfg = parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(exc.usage)
        sys.stderr.write(f"propcal: error: {exc}\n")
        return 1
    except (ConfigError, ParseError) as exc:
        sys.stderr.write(f"propcal: error: {exc}\n")
        return 1
    try:
        {"simulate": _simulate, "fit": _fit, "report": _report}[cfg.kind](cfg)
    except ParseError as exc:
        sys.stderr.write(f"propcal: error: {exc}\n")
        return 1
    except (PropcalError, OSError, ValueError) as exc:
        sys.stderr.write(f"propcal: runtime error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
