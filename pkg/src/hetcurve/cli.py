"""Command-line interface: estimation, simulation experiments, truth curves.

All outputs are machine-readable JSON (plus CSV for simulation reports) and
deterministic given the seed, so repeated runs are byte-identical.
"""

from __future__ import annotations

import argparse
import csv as csv_mod
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .curve import gamma_plugin
from .dataset import load_csv, partition_folds
from .grenander import chernoff_ci, fit_grenander
from .nuisance import (DEFAULT_TRUNCATION, LearnerSpec, cross_fit,
                       load_external_predictions)
from .sim import (ESTIMATOR_NAMES, Scenario, SimpleDgm, run_experiment,
                  scenario_preset, true_gamma)
from .spline import (HatBasis, constrained_spline, fit_spline, gram_matrix,
                     monotonize, pointwise_band, tsup_band)

log = logging.getLogger("hetcurve")

_ESTIMATORS = ("plugin", "grenander", "spline", "mono-spline")


class CliError(ValueError):
    pass


def _setup_logging():
    level = os.environ.get("HETCURVE_LOG", "WARNING").upper()
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _parse_nuisance(text: str) -> tuple[LearnerSpec, LearnerSpec]:
    """Map a --nuisance value to (outcome_spec, propensity_spec).

    Built-in kinds pair the chosen outcome learner with a marginal-mean
    propensity (the randomized-trial default); external supplies both.
    """
    builtin = {
        "builtin:elastic-net": LearnerSpec(kind="elastic-net-logistic"),
        "builtin:knn": LearnerSpec(kind="knn"),
        "builtin:marginal": LearnerSpec(kind="marginal-mean"),
    }
    if text in builtin:
        return builtin[text], LearnerSpec(kind="marginal-mean")
    if text.startswith("external:"):
        path = text[len("external:"):]
        if not path:
            raise CliError("external nuisance requires a path: external:<path>")
        spec = LearnerSpec(kind="external", external_path=path)
        return spec, spec
    raise CliError(f"unknown --nuisance value {text!r}; expected "
                   "builtin:elastic-net|builtin:knn|builtin:marginal|external:<path>")


def _write_json(payload: dict, output: str | None):
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _curve_payload(estimator, grid, estimate, lower, upper, meta) -> dict:
    payload = {
        "estimator": estimator,
        "grid": [float(v) for v in grid],
        "estimate": [float(v) for v in estimate],
        "meta": meta,
    }
    if lower is not None:
        payload["lower"] = [float(v) for v in lower]
        payload["upper"] = [float(v) for v in upper]
    return payload


def cmd_estimate(args) -> dict:
    data = load_csv(args.input, args.outcome, args.treatment)
    folds = partition_folds(data.n, args.folds, args.seed)
    outcome_spec, propensity_spec = _parse_nuisance(args.nuisance)
    if outcome_spec.kind == "external":
        l1 = load_external_predictions(outcome_spec.external_path, data, folds)
    else:
        l1 = cross_fit(data, folds, outcome_spec, propensity_spec, DEFAULT_TRUNCATION)

    meta = {
        "n": data.n,
        "K": args.folds,
        "seed": args.seed,
        "nuisance": args.nuisance,
        "estimator": args.estimator,
        "constrained": bool(args.constrained),
        "version": __version__,
        "warnings": [],
    }

    spline_like = args.estimator in ("spline", "mono-spline")
    if spline_like:
        basis = HatBasis(np.linspace(args.knot_min, args.knot_max, args.knots))
        grid = np.linspace(args.knot_min, args.knot_max, args.grid_points)
        tau_lo, tau_hi = float(l1.tau_hat.min()), float(l1.tau_hat.max())
        if args.knot_min < tau_lo or args.knot_max > tau_hi:
            meta["warnings"].append(
                "knot span [%g, %g] extends beyond the observed tau_hat range [%g, %g]; "
                "estimates in the extrapolated intervals rely on no data"
                % (args.knot_min, args.knot_max, tau_lo, tau_hi))
    else:
        tau_lo, tau_hi = float(l1.tau_hat.min()), float(l1.tau_hat.max())
        pad = 0.05 * max(tau_hi - tau_lo, 1e-12)
        grid = np.linspace(max(tau_lo - pad, -1.0), min(tau_hi + pad, 1.0), args.grid_points)

    lower = upper = None
    if args.estimator == "plugin":
        if args.band != "none":
            raise CliError("the plug-in estimator provides no confidence bands")
        estimate = np.atleast_1d(gamma_plugin(l1)(grid))
    elif args.estimator == "grenander":
        fit = fit_grenander(l1, constrained=args.constrained)
        estimate = np.atleast_1d(fit(grid))
        if args.band == "tsup":
            raise CliError("the Grenander estimator supports --band pointwise only")
        if args.band == "pointwise":
            cis = [chernoff_ci(fit, float(a), level=args.band_level
                               if args.band_level == 0.95 else args.band_level,
                               quantile=None if args.band_level == 0.95 else args.chernoff_quantile)
                   for a in grid]
            lower = [c[0] for c in cis]
            upper = [c[1] for c in cis]
    else:
        fit = fit_spline(l1, basis)
        if args.constrained:
            if args.band != "none":
                raise CliError("confidence bands are not available for the "
                               "constrained spline; drop --band or --constrained")
            coefs = constrained_spline(fit)
            fit = replace(fit, coefficients=coefs)
            estimate = np.atleast_1d(fit(grid))
        elif args.band == "pointwise":
            band = pointwise_band(fit, grid, level=args.band_level)
            estimate, lower, upper = band.estimate, band.lower, band.upper
        elif args.band == "tsup":
            band = tsup_band(fit, grid, B=args.band_draws, level=args.band_level,
                             seed=args.seed)
            estimate, lower, upper = band.estimate, band.lower, band.upper
        else:
            estimate = np.atleast_1d(fit(grid))
        if args.estimator == "mono-spline":
            estimate = np.sort(estimate)
            if lower is not None:
                lower, upper = np.sort(lower), np.sort(upper)
            if args.constrained:
                estimate = np.clip(estimate, 0.0, 1.0)

    payload = _curve_payload(args.estimator, grid, estimate, lower, upper, meta)
    _write_json(payload, args.output)
    return payload


def _scenario_from_config(cfg: dict) -> Scenario:
    def bad(path, msg):
        raise CliError(f"config field {path!r}: {msg}")

    sc = cfg.get("scenario", "simple")
    if isinstance(sc, str):
        try:
            scenario = scenario_preset(sc)
        except ValueError as err:
            bad("scenario", str(err))
    elif isinstance(sc, dict):
        dgm_cfg = sc.get("dgm", {})
        kind = dgm_cfg.get("kind", "simple")
        if kind != "simple":
            bad("scenario.dgm.kind", f"unknown dgm kind {kind!r} (use a preset name "
                "for the synthetic scenarios)")
        scenario = Scenario(sc.get("id", "custom"),
                            SimpleDgm(p=dgm_cfg.get("p", 0.5),
                                      beta1=dgm_cfg.get("beta1", 0.0),
                                      beta2=dgm_cfg.get("beta2", 0.0)))
    else:
        bad("scenario", "must be a preset name or an object")

    overrides = {}
    if "K" in cfg:
        overrides["K"] = int(cfg["K"])
    if "oracle_nuisance" in cfg:
        overrides["oracle_nuisance"] = bool(cfg["oracle_nuisance"])
    for key in ("outcome_learner", "propensity_learner"):
        if key in cfg:
            try:
                spec = LearnerSpec(**cfg[key])
            except (TypeError, ValueError) as err:
                bad(key, str(err))
            overrides["outcome_spec" if key == "outcome_learner" else "propensity_spec"] = spec
    if "knot_min" in cfg or "knot_max" in cfg or "n_knots" in cfg:
        overrides["basis"] = HatBasis(np.linspace(cfg.get("knot_min", -0.05),
                                                  cfg.get("knot_max", 0.1),
                                                  int(cfg.get("n_knots", 10))))
    for key in ("band_draws", "band_level", "dense_grid_points"):
        if key in cfg:
            overrides[key] = cfg[key]
    return replace(scenario, **overrides) if overrides else scenario


def cmd_simulate(args) -> dict:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    else:
        cfg = {
            "scenario": {"dgm": {"kind": "simple", "p": args.p,
                                 "beta1": args.beta1, "beta2": args.beta2}}
            if args.preset == "simple" else args.preset,
        }
        if args.oracle_nuisance:
            cfg["oracle_nuisance"] = True
    for key, value in (("estimators", args.estimators.split(",") if args.estimators else None),
                       ("n", args.n), ("reps", args.reps),
                       ("eval_alpha", args.eval_alpha), ("seed", args.seed)):
        if value is not None:
            cfg.setdefault(key, value)

    estimators = cfg.get("estimators") or ["plugin", "grenander", "spline", "mono-spline"]
    for name in estimators:
        if name not in ESTIMATOR_NAMES:
            raise CliError(f"config field 'estimators': unknown estimator {name!r}")
    reps = int(cfg.get("reps", 0))
    if reps < 1:
        raise CliError("config field 'reps': must be at least 1")
    n = int(cfg.get("n", 0))
    if n < 4:
        raise CliError("config field 'n': must be at least 4")

    scenario = _scenario_from_config(cfg)
    log.info("running %d replicates of scenario %s at n=%d", reps, scenario.scenario_id, n)
    report = run_experiment(scenario, estimators, n=n, reps=reps,
                            eval_alpha=float(cfg.get("eval_alpha", 0.0)),
                            seed=int(cfg.get("seed", 0)), threads=args.threads)
    payload = report.to_dict()
    _write_json(payload, args.output)
    if args.output:
        csv_path = os.path.splitext(args.output)[0] + ".csv"
        fields = list(vars(report.metrics[0]))
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv_mod.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            for m in report.metrics:
                writer.writerow(vars(m))
    return payload


def cmd_truth(args) -> dict:
    if args.preset == "simple":
        dgm = SimpleDgm(p=args.p, beta1=args.beta1, beta2=args.beta2)
    else:
        dgm = scenario_preset(args.preset).dgm
    grid = np.linspace(args.grid_min, args.grid_max, args.grid_points)
    estimate = true_gamma(dgm, grid, mc_draws=args.mc_draws, seed=args.seed)
    meta = {
        "preset": args.preset,
        "mc_draws": args.mc_draws,
        "seed": args.seed,
        "version": __version__,
    }
    payload = _curve_payload("truth", grid, estimate, None, None, meta)
    if args.spline_projection:
        basis = HatBasis(np.linspace(args.knot_min, args.knot_max, args.knots))
        payload["spline_projection"] = _project_truth(dgm, basis, args.mc_draws, args.seed)
    _write_json(payload, args.output)
    return payload


def _project_truth(dgm, basis: HatBasis, mc_draws: int, seed: int) -> dict:
    """L2 projection of the true curve onto the spline basis, by quadrature."""
    nodes, weights = np.polynomial.legendre.leggauss(200)
    zeta = np.zeros(basis.size)
    a = basis.knots
    for l in range(basis.size - 1):
        mid, half = (a[l] + a[l + 1]) / 2.0, (a[l + 1] - a[l]) / 2.0
        u = mid + half * nodes
        gam = true_gamma(dgm, u, mc_draws=mc_draws, seed=seed)
        H = basis.evaluate(u)
        zeta += half * (H * (weights * gam)[:, None]).sum(axis=0)
    coefs = np.linalg.solve(gram_matrix(basis), zeta)
    grid = np.linspace(a[0], a[-1], 201)
    values = basis.evaluate(grid) @ coefs
    return {
        "knots": [float(v) for v in a],
        "coefficients": [float(v) for v in coefs],
        "grid": [float(v) for v in grid],
        "values": [float(v) for v in values],
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetcurve",
                                     description="Estimate the CDF of conditional "
                                                 "average treatment effects")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate the sublevel curve from a CSV file")
    est.add_argument("--input", required=True)
    est.add_argument("--outcome", required=True)
    est.add_argument("--treatment", required=True)
    est.add_argument("--estimator", required=True, choices=_ESTIMATORS)
    est.add_argument("--folds", type=int, default=2)
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--nuisance", default="builtin:elastic-net")
    est.add_argument("--knot-min", type=float, default=-0.05)
    est.add_argument("--knot-max", type=float, default=0.1)
    est.add_argument("--knots", type=int, default=10)
    est.add_argument("--grid-points", type=int, default=201)
    est.add_argument("--constrained", action="store_true")
    est.add_argument("--band", choices=("none", "pointwise", "tsup"), default="none")
    est.add_argument("--band-level", type=float, default=0.95)
    est.add_argument("--band-draws", type=int, default=2000)
    est.add_argument("--chernoff-quantile", type=float, default=None)
    est.add_argument("--threads", type=int, default=1)
    est.add_argument("--output", default=None)
    est.set_defaults(func=cmd_estimate)

    simp = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    simp.add_argument("--config", default=None, help="JSON scenario configuration")
    simp.add_argument("--preset", default="simple",
                      choices=("simple", "weak-heterogeneity", "strong-heterogeneity"))
    simp.add_argument("--p", type=float, default=0.5)
    simp.add_argument("--beta1", type=float, default=0.0)
    simp.add_argument("--beta2", type=float, default=0.0)
    simp.add_argument("--oracle-nuisance", action="store_true")
    simp.add_argument("--estimators", default=None, help="comma-separated estimator names")
    simp.add_argument("--n", type=int, default=None)
    simp.add_argument("--reps", type=int, default=None)
    simp.add_argument("--eval-alpha", type=float, default=None)
    simp.add_argument("--seed", type=int, default=None)
    simp.add_argument("--threads", type=int, default=1)
    simp.add_argument("--output", default=None)
    simp.set_defaults(func=cmd_simulate)

    tru = sub.add_parser("truth", help="export a ground-truth curve for a known process")
    tru.add_argument("--preset", default="simple",
                     choices=("simple", "weak-heterogeneity", "strong-heterogeneity"))
    tru.add_argument("--p", type=float, default=0.5)
    tru.add_argument("--beta1", type=float, default=0.0)
    tru.add_argument("--beta2", type=float, default=0.0)
    tru.add_argument("--grid-min", type=float, default=-1.0)
    tru.add_argument("--grid-max", type=float, default=1.0)
    tru.add_argument("--grid-points", type=int, default=201)
    tru.add_argument("--mc-draws", type=int, default=1_000_000)
    tru.add_argument("--seed", type=int, default=0)
    tru.add_argument("--spline-projection", action="store_true")
    tru.add_argument("--knot-min", type=float, default=-0.05)
    tru.add_argument("--knot-max", type=float, default=0.1)
    tru.add_argument("--knots", type=int, default=10)
    tru.add_argument("--output", default=None)
    tru.set_defaults(func=cmd_truth)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except Exception as err:  # noqa: BLE001 - structured error surface
        payload = {"error": {"type": type(err).__name__, "message": str(err)}}
        sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
