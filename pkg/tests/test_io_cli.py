import numpy as np
import pytest

from propcal import DgpConfig, generate
from propcal.cli import main, parse_args, parse_grid
from propcal.errors import ConfigError, ParseError
from propcal.experiments import Condition, ExperimentRow, SlopeSummary
from propcal.io import (read_config, read_dataset_csv, read_results_csv, read_slopes_csv,
                        write_dataset_csv, write_results_csv, write_slopes_csv)


def test_dataset_roundtrip_bit_exact(tmp_path):
    d = generate(DgpConfig(n=300, seed=17))
    path = tmp_path / "d.csv"
    write_dataset_csv(d, path)
    assert path.read_text().splitlines()[0] == "x1,x2,x3,x4,a,y,y0,y1,pi_true"
    back = read_dataset_csv(path)
    assert np.array_equal(back.covariates, d.covariates)
    assert np.array_equal(back.treatment, d.treatment)
    for f in ("outcome", "y0", "y1"):
        assert np.array_equal(getattr(back, f), getattr(d, f))
    assert np.array_equal(back.true_propensity, d.true_propensity)
    assert back.covariate_names == ("x1", "x2", "x3", "x4")
    assert back.true_ate == 5.0


def test_wide_dataset(tmp_path):
    rng = np.random.default_rng(0)
    n, d = 30, 58
    X = rng.normal(size=(n, d))
    a = rng.integers(0, 2, n)
    y0 = rng.normal(size=n)
    y1 = y0 + 2
    y = np.where(a == 1, y1, y0)
    header = [f"c{j}" for j in range(d)] + ["a", "y", "y0", "y1"]
    lines = [",".join(header)] + [
        ",".join([*(repr(float(v)) for v in X[i]), str(a[i]), repr(float(y[i])), repr(float(y0[i])), repr(float(y1[i]))])
        for i in range(n)]
    path = tmp_path / "wide.csv"
    path.write_text("\n".join(lines) + "\n")
    back = read_dataset_csv(path)
    assert back.covariates.shape == (n, 58)
    assert back.true_propensity is None


@pytest.mark.parametrize("content,match", [
    ("x1,a,y\n1.0,2,3.0\n", "row 2.*'a'"),
    ("x1,a,y\n1.0,0,3.0\n1.0,1,abc\n", "row 3.*'y'"),
    ("x1,y\n1.0,3.0\n", "missing required column 'a'"),
    ("x1,a\n1.0,0\n", "missing required column 'y'"),
    ("x1,a,y\n1.0,0\n", "row 2 has 2 fields"),
    ("x1,a,y,y0,y1\n1.0,1,3.0,1.0,2.0\n", "row 2"),
])
def test_dataset_parse_errors(tmp_path, content, match):
    path = tmp_path / "bad.csv"
    path.write_text(content)
    with pytest.raises(ParseError, match=match):
        read_dataset_csv(path)


def test_results_roundtrip(tmp_path):
    rows = [ExperimentRow(0, Condition.scale(0.25), "pre", 0.1, 1.0 / 3, 0.2, 5.1),
            ExperimentRow(0, Condition.scale(0.25), "post", 0.01, 0.1, float("inf"), 4.9),
            ExperimentRow(2, Condition.estimator("lasso"), "pre", 0.0, 0.0, 0.0, 5.0)]
    path = tmp_path / "r.csv"
    write_results_csv(rows, path)
    assert read_results_csv(path) == rows


def test_empty_results_header_only(tmp_path):
    path = tmp_path / "r.csv"
    write_results_csv([], path)
    assert path.read_text() == "condition,replicate,stage,ici,ate_error,max_asmd,ate_hat\n"
    assert read_results_csv(path) == []


def test_slopes_roundtrip(tmp_path):
    s = [SlopeSummary(Condition.scale(2.0), -1.5, 0.1, 7.25, 9, -0.05, -1.0 / 7)]
    path = tmp_path / "s.csv"
    write_slopes_csv(s, path)
    assert read_slopes_csv(path) == s
    assert path.read_text().startswith("condition,q1,median,q3")


def test_write_error_names_path(tmp_path):
    with pytest.raises(OSError, match="nope"):
        write_results_csv([], tmp_path / "nope" / "r.csv")


def test_config_parsing(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\nreps = 3\n\nscales=0.5,2.0  # trailing\n")
    assert read_config(p) == {"reps": "3", "scales": "0.5,2.0"}
    p.write_text("reps 3\n")
    with pytest.raises(ConfigError):
        read_config(p)


def test_parse_grid():
    assert parse_grid("depth=2|3, n_trees=100") == [{"depth": 2, "n_trees": 100},
                                                     {"depth": 3, "n_trees": 100}]
    assert parse_grid("lam=0.5|1e-3") == [{"lam": 0.5}, {"lam": 0.001}]
    with pytest.raises(ConfigError):
        parse_grid("depth")


def test_cli_simulate_example(tmp_path):
    out = tmp_path / "r.csv"
    code = main(["simulate", "--scales", "1.0", "--reps", "1", "--n", "100", "--seed", "7",
                 "--out", str(out)])
    assert code == 0
    assert len(read_results_csv(out)) == 2


def test_cli_simulate_defaults():
    cfg = parse_args(["simulate"])
    assert cfg.scales == (0.25, 0.5, 0.75, 1.0, 1.5, 1.75, 2.0)
    assert cfg.reps == 10 and cfg.n == 10_000


def test_cli_bogus_estimator(capsys):
    assert main(["fit", "--synthetic", "--estimators", "bogus"]) == 1
    err = capsys.readouterr().err
    for fam in ("logistic", "lasso", "ridge", "random_forest", "gradient_boosting"):
        assert fam in err


@pytest.mark.parametrize("argv", [
    ["simulate", "--bogus"], ["simulate", "--reps", "abc"], ["simulate", "--scales", "0,1"],
    ["simulate", "--reps", "0"], ["fit"], ["report"], [],
    ["fit", "--data", "x.csv", "--synthetic"],
])
def test_cli_validation_errors(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 1
    assert list(tmp_path.iterdir()) == []


def test_cli_usage_text_on_unknown_flag(capsys):
    main(["simulate", "--bogus"])
    assert "usage:" in capsys.readouterr().err


def test_cli_config_file_and_override(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("scales = 0.5\nreps = 2\nn = 200\nseed = 3\n")
    cfg = parse_args(["simulate", "--config", str(cfg_file), "--reps", "1"])
    assert cfg.scales == (0.5,) and cfg.reps == 1 and cfg.n == 200 and cfg.seed == 3
    cfg_file.write_text("bogus_key = 1\n")
    assert main(["simulate", "--config", str(cfg_file)]) == 1


def test_cli_fit_config_grid(tmp_path):
    cfg_file = tmp_path / "fit.cfg"
    cfg_file.write_text("grid.random_forest = depth=2, n_trees=5|10\nestimators = random_forest\n")
    cfg = parse_args(["fit", "--synthetic", "--config", str(cfg_file)])
    assert cfg.specs()[0].grid == [{"depth": 2, "n_trees": 5}, {"depth": 2, "n_trees": 10}]


def test_cli_fit_runs_on_data_file(tmp_path):
    data = tmp_path / "d.csv"
    write_dataset_csv(generate(DgpConfig(n=300, seed=5)), data)
    out, scores = tmp_path / "f.csv", tmp_path / "s.csv"
    code = main(["fit", "--data", str(data), "--estimators", "logistic,ridge",
                 "--outer-folds", "3", "--inner-folds", "3", "--out", str(out),
                 "--scores-out", str(scores)])
    assert code == 0
    rows = read_results_csv(out)
    assert [str(r.condition) for r in rows] == ["estimator=logistic"] * 2 + ["estimator=ridge"] * 2
    assert scores.read_text().splitlines()[0] == "a,pi_true,logistic:pre,logistic:post,ridge:pre,ridge:post"


def test_cli_fit_needs_ground_truth(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("x1,a,y\n" + "".join(f"{i}.0,{i % 2},{i}.5\n" for i in range(30)))
    assert main(["fit", "--data", str(data), "--estimators", "logistic", "--outer-folds", "2",
                 "--inner-folds", "2", "--out", str(tmp_path / "o.csv")]) == 2


def test_cli_report_slopes_and_curves(tmp_path):
    res, scores = tmp_path / "r.csv", tmp_path / "s.csv"
    assert main(["simulate", "--scales", "0.5,2.0", "--reps", "3", "--n", "300",
                 "--out", str(res), "--scores-out", str(scores)]) == 0
    assert main(["report", "--in", str(res), "--out", str(tmp_path / "rep")]) == 0
    slopes = read_slopes_csv(tmp_path / "rep" / "slopes.csv")
    assert [str(s.condition) for s in slopes] == ["scale=0.5", "scale=2.0"]
    assert main(["report", "--in", str(scores), "--out", str(tmp_path / "cur")]) == 0
    curves = (tmp_path / "cur" / "calibration_curves.csv").read_text().splitlines()
    assert curves[0] == "score,bin,lower,upper,count,mean_predicted,observed_rate"
    assert any(line.startswith("scale=2.0:pre,") for line in curves)
    assert (tmp_path / "cur" / "loess_curves.csv").exists()
    assert (tmp_path / "cur" / "ici.csv").exists()


def test_cli_simulate_byte_identical(tmp_path):
    args = ["simulate", "--scales", "0.5,1.0,2.0", "--reps", "2", "--n", "500", "--seed", "9"]
    assert main(args + ["--out", str(tmp_path / "a.csv")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_threads_env_validation(monkeypatch):
    monkeypatch.setenv("PROPCAL_THREADS", "zero")
    assert main(["simulate", "--reps", "1"]) == 1
