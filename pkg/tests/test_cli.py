"""Command-line interface: outputs, schema conformance, determinism, errors."""

import json

import numpy as np
import pytest

import hetcurve as hc
from hetcurve.cli import main

try:
    from importlib.resources import files
except ImportError:  # pragma: no cover
    files = None

import jsonschema

SCHEMA = json.loads(files("hetcurve").joinpath("schema/curve_estimate.json").read_text())


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "trial.csv"
    hc.draw(hc.SimpleDgm(beta1=2.0), 300, 7).to_csv(path)
    return str(path)


def run_cli(args, capsys=None):
    code = main(args)
    return code


def estimate(data_csv, tmp_path, name, *extra):
    out = tmp_path / f"{name}.json"
    code = main(["estimate", "--input", data_csv, "--outcome", "y",
                 "--treatment", "a", "--seed", "3", "--folds", "2",
                 "--nuisance", "builtin:knn", "--output", str(out), *extra])
    return code, out


def test_estimate_plugin(data_csv, tmp_path):
    code, out = estimate(data_csv, tmp_path, "plugin", "--estimator", "plugin")
    assert code == 0
    payload = json.loads(out.read_text())
    jsonschema.validate(payload, SCHEMA)
    assert payload["estimator"] == "plugin"
    est = payload["estimate"]
    assert all(b >= a - 1e-12 for a, b in zip(est, est[1:]))  # ECDF is monotone
    assert "lower" not in payload
    assert payload["meta"]["n"] == 300


def test_estimate_plugin_rejects_band(data_csv, tmp_path, capsys):
    code, _ = estimate(data_csv, tmp_path, "bad", "--estimator", "plugin",
                       "--band", "pointwise")
    assert code == 1
    err = json.loads(capsys.readouterr().err)
    assert "no confidence bands" in err["error"]["message"]


def test_estimate_grenander_pointwise(data_csv, tmp_path):
    code, out = estimate(data_csv, tmp_path, "gren", "--estimator", "grenander",
                         "--band", "pointwise")
    assert code == 0
    payload = json.loads(out.read_text())
    jsonschema.validate(payload, SCHEMA)
    lo, est, hi = (np.array(payload[k]) for k in ("lower", "estimate", "upper"))
    assert np.all(lo <= est) and np.all(est <= hi)
    assert np.all(np.diff(est) >= -1e-12)


def test_estimate_grenander_rejects_tsup(data_csv, tmp_path, capsys):
    code, _ = estimate(data_csv, tmp_path, "bad2", "--estimator", "grenander",
                       "--band", "tsup")
    assert code == 1


def test_estimate_spline_tsup(data_csv, tmp_path):
    code, out = estimate(data_csv, tmp_path, "spl", "--estimator", "spline",
                         "--band", "tsup", "--band-draws", "1200")
    assert code == 0
    payload = json.loads(out.read_text())
    jsonschema.validate(payload, SCHEMA)
    assert len(payload["grid"]) == 201
    assert payload["grid"][0] == -0.05 and payload["grid"][-1] == pytest.approx(0.1)


def test_estimate_mono_spline_sorted(data_csv, tmp_path):
    code, out = estimate(data_csv, tmp_path, "mono", "--estimator", "mono-spline",
                         "--band", "pointwise")
    payload = json.loads(out.read_text())
    assert code == 0
    for key in ("estimate", "lower", "upper"):
        vals = payload[key]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_estimate_constrained_spline(data_csv, tmp_path):
    code, out = estimate(data_csv, tmp_path, "con", "--estimator", "spline",
                         "--constrained")
    payload = json.loads(out.read_text())
    assert code == 0
    est = np.array(payload["estimate"])
    assert np.all((est >= -1e-12) & (est <= 1 + 1e-12))
    assert np.all(np.diff(est) >= -1e-12)


def test_estimate_constrained_rejects_band(data_csv, tmp_path, capsys):
    code, _ = estimate(data_csv, tmp_path, "conb", "--estimator", "spline",
                       "--constrained", "--band", "tsup")
    assert code == 1


def test_estimate_extrapolation_warning(data_csv, tmp_path):
    code, out = estimate(data_csv, tmp_path, "warn", "--estimator", "spline",
                         "--knot-min", "-0.9", "--knot-max", "0.9")
    payload = json.loads(out.read_text())
    assert code == 0
    assert any("extrapolated" in w for w in payload["meta"]["warnings"])


def test_estimate_deterministic(data_csv, tmp_path):
    _, out1 = estimate(data_csv, tmp_path, "d1", "--estimator", "spline",
                       "--band", "tsup")
    _, out2 = estimate(data_csv, tmp_path, "d2", "--estimator", "spline",
                       "--band", "tsup")
    assert out1.read_bytes() == out2.read_bytes()


def test_estimate_elastic_net_smoke(data_csv, tmp_path):
    out = tmp_path / "enet.json"
    code = main(["estimate", "--input", data_csv, "--outcome", "y",
                 "--treatment", "a", "--estimator", "grenander", "--seed", "1",
                 "--nuisance", "builtin:elastic-net", "--grid-points", "31",
                 "--output", str(out)])
    assert code == 0
    jsonschema.validate(json.loads(out.read_text()), SCHEMA)


def test_estimate_external_nuisance(data_csv, tmp_path):
    import csv
    from hetcurve.dataset import load_csv, partition_folds
    d = load_csv(data_csv, "y", "a")
    folds = partition_folds(d.n, 2, 3)
    pred = tmp_path / "pred.csv"
    with open(pred, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row_index", "fold", "mu0", "mu1", "pi"])
        for i in range(d.n):
            w.writerow([i, folds.fold_of[i], 0.45, 0.55, 0.5])
    out = tmp_path / "ext.json"
    code = main(["estimate", "--input", data_csv, "--outcome", "y",
                 "--treatment", "a", "--estimator", "plugin", "--seed", "3",
                 "--nuisance", f"external:{pred}", "--output", str(out)])
    assert code == 0


def test_estimate_unknown_nuisance(data_csv, tmp_path, capsys):
    code, _ = estimate(data_csv, tmp_path, "x", "--estimator", "plugin",
                       "--nuisance", "builtin:forest")
    assert code == 1
    err = json.loads(capsys.readouterr().err)
    assert "unknown --nuisance" in err["error"]["message"]


def test_estimate_missing_file(tmp_path, capsys):
    code = main(["estimate", "--input", str(tmp_path / "none.csv"), "--outcome",
                 "y", "--treatment", "a", "--estimator", "plugin"])
    assert code == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["type"] == "FileNotFoundError"


def test_simulate_writes_json_and_csv(tmp_path):
    out = tmp_path / "sim.json"
    code = main(["simulate", "--preset", "simple", "--beta1", "2.0", "--n", "200",
                 "--reps", "3", "--eval-alpha", "0.0", "--seed", "11",
                 "--estimators", "plugin", "--oracle-nuisance",
                 "--output", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["reps"] == 3 and payload["failures"] == []
    csv_text = (tmp_path / "sim.csv").read_text()
    assert csv_text.startswith("estimator,")
    assert "plugin" in csv_text


def test_simulate_threads_deterministic(tmp_path):
    outs = []
    for name, threads in (("a", "1"), ("b", "3"), ("c", "3")):
        out = tmp_path / f"{name}.json"
        code = main(["simulate", "--preset", "simple", "--beta1", "2.0",
                     "--n", "150", "--reps", "4", "--seed", "2",
                     "--estimators", "plugin,grenander", "--oracle-nuisance",
                     "--threads", threads, "--output", str(out)])
        assert code == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_simulate_config_file(tmp_path):
    cfg = {"scenario": {"dgm": {"kind": "simple", "beta1": 1.0}},
           "oracle_nuisance": True, "n": 120, "reps": 2, "seed": 4,
           "estimators": ["plugin"], "knot_min": -0.2, "knot_max": 0.2,
           "n_knots": 5}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "rep.json"
    assert main(["simulate", "--config", str(path), "--output", str(out)]) == 0
    assert json.loads(out.read_text())["scenario_id"] == "custom"


def test_simulate_config_errors(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"scenario": "simple", "n": 100, "reps": 0}))
    assert main(["simulate", "--config", str(path)]) == 1
    err = json.loads(capsys.readouterr().err)
    assert "reps" in err["error"]["message"]


def test_simulate_rejects_bad_estimator(tmp_path, capsys):
    assert main(["simulate", "--preset", "simple", "--n", "100", "--reps", "1",
                 "--estimators", "wizard"]) == 1


def test_truth_matches_analytic(tmp_path):
    out = tmp_path / "truth.json"
    code = main(["truth", "--preset", "simple", "--beta1", "2.0",
                 "--grid-points", "5", "--grid-min", "-0.2", "--grid-max", "0.2",
                 "--mc-draws", "400000", "--seed", "5", "--output", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    truth = hc.SimpleDgm(beta1=2.0).analytic_gamma(np.array(payload["grid"]))
    assert np.allclose(payload["estimate"], truth, atol=0.01)


def test_truth_spline_projection(tmp_path):
    out = tmp_path / "proj.json"
    code = main(["truth", "--preset", "simple", "--beta1", "2.0",
                 "--spline-projection", "--mc-draws", "200000",
                 "--knot-min", "-0.2", "--knot-max", "0.2", "--knots", "5",
                 "--output", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    proj = payload["spline_projection"]
    assert len(proj["coefficients"]) == 5
    # the projection tracks the truth closely on a smooth region
    truth = hc.SimpleDgm(beta1=2.0).analytic_gamma(np.array(proj["grid"]))
    assert np.allclose(proj["values"], truth, atol=0.02)


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.strip() == hc.__version__
