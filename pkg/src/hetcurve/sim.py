"""Data-generating processes, ground-truth curves, and the Monte Carlo harness.

The built-in synthetic scenario coefficients are invented for this package;
they describe qualitative weak/strong heterogeneity regimes and are not
estimates from any trial.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, logit

from .curve import gamma_plugin
from .dataset import Dataset, partition_folds
from .grenander import chernoff_ci, fit_grenander
from .nuisance import LearnerSpec, LevelOneData, assemble_level_one, cross_fit
from .spline import HatBasis, default_knots, fit_spline, monotonize, pointwise_ci, tsup_band

__all__ = [
    "SimpleDgm",
    "SyntheticDgm",
    "CovariateSpec",
    "Scenario",
    "ExperimentReport",
    "EstimatorMetrics",
    "draw",
    "true_tau",
    "true_gamma",
    "run_experiment",
    "scenario_preset",
    "ESTIMATOR_NAMES",
]

ESTIMATOR_NAMES = ("plugin", "grenander", "spline", "mono-spline", "oracle")


@dataclass(frozen=True)
class SimpleDgm:
    """Two-covariate benchmark: uniform biomarker, Bernoulli group, randomized treatment.

    Y | A, W is Bernoulli with success probability expit(beta1*W1*A + beta2*W2*A).
    """

    p: float = 0.5
    beta1: float = 0.0
    beta2: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must lie in (0, 1)")

    def draw_covariates(self, n: int, rng: np.random.Generator) -> np.ndarray:
        w1 = rng.uniform(-1.0, 1.0, n)
        w2 = rng.binomial(1, self.p, n).astype(float)
        return np.column_stack([w1, w2])

    def covariate_names(self) -> tuple[str, ...]:
        return ("w1", "w2")

    def mu(self, a, w: np.ndarray) -> np.ndarray:
        lin = self.beta1 * w[:, 0] + self.beta2 * w[:, 1]
        return expit(np.asarray(a, dtype=float) * lin)

    def pi(self, w: np.ndarray) -> np.ndarray:
        return np.full(len(w), 0.5)

    def tau(self, w: np.ndarray) -> np.ndarray:
        return self.mu(1, w) - 0.5

    def analytic_gamma(self, alpha) -> np.ndarray | None:
        """Closed-form CDF of tau(W), available when only one interaction is active."""
        alpha = np.asarray(alpha, dtype=float)
        shifted = np.clip(alpha + 0.5, 1e-12, 1 - 1e-12)
        if self.beta2 == 0.0 and self.beta1 != 0.0:
            out = np.clip((logit(shifted) / self.beta1 + 1.0) / 2.0, 0.0, 1.0)
            if self.beta1 < 0:
                out = 1.0 - out  # tau decreasing in w1; still clip-safe since w1 is symmetric
            return out
        if self.beta1 == 0.0:
            taus = np.array([0.0, expit(self.beta2) - 0.5])
            probs = np.array([1.0 - self.p, self.p])
            order = np.argsort(taus)
            return np.array([(probs[order] * (taus[order] <= a)).sum() for a in np.atleast_1d(alpha)])
        return None


@dataclass(frozen=True)
class CovariateSpec:
    """One sequentially generated covariate: logistic binary or linear normal."""

    kind: str  # "binary" or "continuous"
    intercept: float = 0.0
    coefs: tuple[float, ...] = ()  # over previously generated covariates
    sd: float = 1.0

    def __post_init__(self):
        if self.kind not in ("binary", "continuous"):
            raise ValueError("covariate kind must be 'binary' or 'continuous'")
        if self.kind == "continuous" and self.sd <= 0:
            raise ValueError("continuous covariate requires sd > 0")


@dataclass(frozen=True)
class SyntheticDgm:
    """Sequentially generated covariates with a logistic outcome model.

    The outcome linear predictor is intercept + main.w + A*(treatment_main +
    interactions.w): main effects plus all second-order treatment
    interactions.
    """

    covariates: tuple[CovariateSpec, ...]
    treatment_probability: float = 0.5
    outcome_intercept: float = 0.0
    outcome_main: tuple[float, ...] = ()
    treatment_main: float = 0.0
    treatment_interactions: tuple[float, ...] = ()

    def __post_init__(self):
        d = len(self.covariates)
        for j, spec in enumerate(self.covariates):
            if len(spec.coefs) != j:
                raise ValueError(f"covariate {j} needs exactly {j} predecessor coefficients")
        if len(self.outcome_main) != d or len(self.treatment_interactions) != d:
            raise ValueError("outcome coefficient vectors must match the covariate count")
        if not 0.0 < self.treatment_probability < 1.0:
            raise ValueError("treatment_probability must lie in (0, 1)")

    def draw_covariates(self, n: int, rng: np.random.Generator) -> np.ndarray:
        d = len(self.covariates)
        w = np.empty((n, d))
        for j, spec in enumerate(self.covariates):
            lin = spec.intercept + w[:, :j] @ np.asarray(spec.coefs)
            if spec.kind == "binary":
                w[:, j] = rng.binomial(1, expit(lin))
            else:
                w[:, j] = rng.normal(lin, spec.sd)
        return w

    def covariate_names(self) -> tuple[str, ...]:
        return tuple(f"w{j + 1}" for j in range(len(self.covariates)))

    def mu(self, a, w: np.ndarray) -> np.ndarray:
        base = self.outcome_intercept + w @ np.asarray(self.outcome_main)
        trt = self.treatment_main + w @ np.asarray(self.treatment_interactions)
        return expit(base + np.asarray(a, dtype=float) * trt)

    def pi(self, w: np.ndarray) -> np.ndarray:
        return np.full(len(w), self.treatment_probability)

    def tau(self, w: np.ndarray) -> np.ndarray:
        return self.mu(1, w) - self.mu(0, w)

    def analytic_gamma(self, alpha):
        return None


def draw(dgm, n: int, seed: int) -> Dataset:
    """Simulate a dataset of n observations, deterministic given the seed."""
    rng = np.random.default_rng(seed)
    w = dgm.draw_covariates(n, rng)
    a = rng.binomial(1, dgm.pi(w))
    y = rng.binomial(1, dgm.mu(a, w))
    return Dataset(w, a, y, dgm.covariate_names())


def true_tau(dgm, w: np.ndarray) -> np.ndarray:
    """CATE under the data-generating process."""
    return dgm.tau(np.atleast_2d(np.asarray(w, dtype=float)))


def true_gamma(dgm, grid, mc_draws: int = 1_000_000, seed: int = 0) -> np.ndarray:
    """Monte Carlo CDF of the true CATE evaluated on a grid."""
    if mc_draws < 100_000:
        raise ValueError("mc_draws must be at least 1e5")
    rng = np.random.default_rng(seed)
    taus = np.sort(dgm.tau(dgm.draw_covariates(mc_draws, rng)))
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    return np.searchsorted(taus, grid, side="right") / mc_draws


@dataclass(frozen=True)
class Scenario:
    """Everything needed to run one simulation setting."""

    scenario_id: str
    dgm: SimpleDgm | SyntheticDgm
    outcome_spec: LearnerSpec = LearnerSpec()
    propensity_spec: LearnerSpec = LearnerSpec(kind="marginal-mean")
    K: int = 2
    truncation: float = 0.01
    oracle_nuisance: bool = False
    basis: HatBasis = field(default_factory=default_knots)
    band_draws: int = 2000
    band_level: float = 0.95
    dense_grid_points: int = 512


def scenario_preset(name: str, **overrides) -> Scenario:
    """Built-in scenarios; the synthetic coefficients are invented, not trial-derived."""
    covariates = (
        CovariateSpec("binary", intercept=-0.4),
        CovariateSpec("binary", intercept=0.2, coefs=(0.5,)),
        CovariateSpec("binary", intercept=0.0, coefs=(0.3, -0.4)),
        CovariateSpec("binary", intercept=-0.8, coefs=(0.2, 0.1, 0.3)),
        CovariateSpec("binary", intercept=0.5, coefs=(-0.3, 0.2, 0.0, 0.4)),
        CovariateSpec("continuous", intercept=0.0, coefs=(0.3, -0.2, 0.1, 0.0, 0.2), sd=1.0),
        CovariateSpec("continuous", intercept=0.5, coefs=(0.1, 0.2, -0.1, 0.3, 0.0, 0.25), sd=0.8),
        CovariateSpec("continuous", intercept=-0.2, coefs=(0.0, 0.1, 0.2, -0.2, 0.1, 0.15, 0.1), sd=1.2),
    )
    main = (0.3, -0.2, 0.25, 0.1, -0.3, 0.2, -0.15, 0.1)
    if name == "simple":
        scenario = Scenario("simple", SimpleDgm(p=0.5, beta1=2.0, beta2=0.0))
    elif name == "weak-heterogeneity":
        dgm = SyntheticDgm(covariates, outcome_intercept=-0.8, outcome_main=main,
                           treatment_main=-0.1, treatment_interactions=(0.0,) * 8)
        scenario = Scenario("weak-heterogeneity", dgm)
    elif name == "strong-heterogeneity":
        dgm = SyntheticDgm(covariates, outcome_intercept=-0.8, outcome_main=main,
                           treatment_main=-0.5,
                           treatment_interactions=(0.4, -0.3, 0.35, 0.2, -0.4, 0.3, -0.25, 0.2))
        scenario = Scenario("strong-heterogeneity", dgm)
    else:
        raise ValueError(f"unknown scenario preset {name!r}")
    return replace(scenario, **overrides) if overrides else scenario


@dataclass(frozen=True)
class EstimatorMetrics:
    estimator: str
    eval_alpha: float
    truth: float
    bias: float
    mse: float
    variance: float
    bias_se: float
    mse_se: float
    pointwise_coverage: float | None
    pointwise_coverage_se: float | None
    simultaneous_coverage: float | None
    simultaneous_coverage_se: float | None
    successes: int


@dataclass(frozen=True)
class ExperimentReport:
    scenario_id: str
    n: int
    reps: int
    seed: int
    eval_alpha: float
    metrics: tuple[EstimatorMetrics, ...]
    failures: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "n": self.n,
            "reps": self.reps,
            "seed": self.seed,
            "eval_alpha": self.eval_alpha,
            "metrics": [vars(m) for m in self.metrics],
            "failures": list(self.failures),
        }


def _oracle_level_one(scenario: Scenario, data: Dataset, folds) -> LevelOneData:
    """True nuisances routed through the same assembly path as external predictions."""
    dgm = scenario.dgm
    return assemble_level_one(data, folds, dgm.mu(0, data.w), dgm.mu(1, data.w),
                              np.clip(dgm.pi(data.w), scenario.truncation,
                                      1 - scenario.truncation))


def _replicate(scenario: Scenario, estimators, n, eval_alpha, rep_seed_seq,
               truth_alpha, truth_grid, dense_grid):
    seeds = rep_seed_seq.generate_state(3)
    data = draw(scenario.dgm, n, int(seeds[0]))
    folds = partition_folds(n, scenario.K, int(seeds[1]))
    if scenario.oracle_nuisance:
        l1 = _oracle_level_one(scenario, data, folds)
    else:
        l1 = cross_fit(data, folds, scenario.outcome_spec, scenario.propensity_spec,
                       scenario.truncation)

    out = {}
    spline_fit = None
    if any(e in ("spline", "mono-spline") for e in estimators):
        spline_fit = fit_spline(l1, scenario.basis)
    for name in estimators:
        if name == "plugin":
            out[name] = (float(gamma_plugin(l1)(eval_alpha)), None, None)
        elif name == "grenander":
            fit = fit_grenander(l1)
            lo, hi = chernoff_ci(fit, eval_alpha, level=0.95)
            out[name] = (float(fit(eval_alpha)), (lo, hi), None)
        elif name == "spline":
            est = float(spline_fit(eval_alpha))
            lo, hi = pointwise_ci(spline_fit, eval_alpha, level=scenario.band_level)
            band = tsup_band(spline_fit, dense_grid, B=scenario.band_draws,
                             level=scenario.band_level, seed=int(seeds[2]))
            hit = bool(np.all((band.lower <= truth_grid) & (truth_grid <= band.upper)))
            out[name] = (est, (lo, hi), hit)
        elif name == "mono-spline":
            band = tsup_band(spline_fit, dense_grid, B=scenario.band_draws,
                             level=scenario.band_level, seed=int(seeds[2]))
            mono = monotonize(band)
            pos = int(np.argmin(np.abs(dense_grid - eval_alpha)))
            hit = bool(np.all((mono.lower <= truth_grid) & (truth_grid <= mono.upper)))
            out[name] = (float(mono.estimate[pos]), None, hit)
        elif name == "oracle":
            out[name] = (truth_alpha, (truth_alpha, truth_alpha), True)
        else:
            raise ValueError(f"unknown estimator {name!r}; expected one of {ESTIMATOR_NAMES}")
    return out


def run_experiment(scenario: Scenario, estimators, n: int, reps: int,
                   eval_alpha: float, seed: int, threads: int = 1) -> ExperimentReport:
    """Monte Carlo study of bias, MSE, and coverage at a single evaluation point.

    Replicates use independent seeds spawned from the master seed and may run
    in parallel; the report is identical regardless of scheduling. Failed
    replicates are counted and reported, never silently dropped.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    estimators = list(estimators)
    for name in estimators:
        if name not in ESTIMATOR_NAMES:
            raise ValueError(f"unknown estimator {name!r}; expected one of {ESTIMATOR_NAMES}")

    master = np.random.SeedSequence(seed)
    truth_seq, *rep_seqs = master.spawn(reps + 1)
    analytic = scenario.dgm.analytic_gamma(eval_alpha)
    lo, hi = scenario.basis.span
    dense_grid = np.linspace(lo, hi, scenario.dense_grid_points)
    if analytic is not None:
        truth_alpha = float(np.atleast_1d(analytic)[0])
        truth_grid = np.asarray(scenario.dgm.analytic_gamma(dense_grid), dtype=float)
    else:
        truth_seed = int(truth_seq.generate_state(1)[0])
        truth_grid = true_gamma(scenario.dgm, dense_grid, seed=truth_seed)
        truth_alpha = float(true_gamma(scenario.dgm, [eval_alpha], seed=truth_seed)[0])

    def one(r):
        return _replicate(scenario, estimators, n, eval_alpha, rep_seqs[r],
                          truth_alpha, truth_grid, dense_grid)

    results: list[dict | Exception] = [None] * reps
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {r: pool.submit(one, r) for r in range(reps)}
            for r, fut in futures.items():
                try:
                    results[r] = fut.result()
                except Exception as err:  # noqa: BLE001 - reported, not swallowed
                    results[r] = err
    else:
        for r in range(reps):
            try:
                results[r] = one(r)
            except Exception as err:  # noqa: BLE001
                results[r] = err

    failures = tuple(f"replicate {r}: {res}" for r, res in enumerate(results)
                     if isinstance(res, Exception))
    ok = [res for res in results if not isinstance(res, Exception)]

    metrics = []
    for name in estimators:
        ests = np.array([res[name][0] for res in ok])
        if len(ests) == 0:
            raise RuntimeError(f"all {reps} replicates failed: {failures[:3]}")
        errors = ests - truth_alpha
        bias = float(errors.mean())
        mse = float((errors**2).mean())
        variance = float((errors**2).mean() - errors.mean() ** 2)
        r_ok = len(ests)
        cis = [res[name][1] for res in ok]
        if cis[0] is not None:
            hits = np.array([lo_ <= truth_alpha <= hi_ for lo_, hi_ in cis], dtype=float)
            cov = float(hits.mean())
            cov_se = float(np.sqrt(cov * (1 - cov) / r_ok))
        else:
            cov = cov_se = None
        bands = [res[name][2] for res in ok]
        if bands[0] is not None:
            bhits = np.array(bands, dtype=float)
            bcov = float(bhits.mean())
            bcov_se = float(np.sqrt(bcov * (1 - bcov) / r_ok))
        else:
            bcov = bcov_se = None
        metrics.append(EstimatorMetrics(
            estimator=name, eval_alpha=eval_alpha, truth=truth_alpha, bias=bias,
            mse=mse, variance=variance,
            bias_se=float(errors.std(ddof=0) / np.sqrt(r_ok)),
            mse_se=float((errors**2).std(ddof=0) / np.sqrt(r_ok)),
            pointwise_coverage=cov, pointwise_coverage_se=cov_se,
            simultaneous_coverage=bcov, simultaneous_coverage_se=bcov_se,
            successes=r_ok,
        ))
    return ExperimentReport(scenario_id=scenario.scenario_id, n=n, reps=reps,
                            seed=seed, eval_alpha=eval_alpha,
                            metrics=tuple(metrics), failures=failures)
