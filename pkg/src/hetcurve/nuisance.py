"""Nuisance estimation and cross-fitting.

Fits outcome regressions and propensity scores out-of-fold, and assembles the
per-observation "level-one" data (tau_hat, mu_hat, pi_hat, phi_hat) that every
downstream estimator consumes. The built-in learners are an elastic-net
penalized logistic regression (IRLS with a coordinate-descent inner loop and
internal cross-validation over the penalty), a k-nearest-neighbor regression,
and a marginal mean. Predictions from arbitrary external CATE learners can be
ingested from a CSV file instead.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from . import _core
from .dataset import DataError, Dataset, FoldAssignment

__all__ = [
    "LearnerSpec",
    "NuisanceModel",
    "LevelOneData",
    "NuisanceError",
    "PositivityError",
    "LearnerError",
    "fit_learner",
    "pseudo_outcome",
    "cross_fit",
    "load_external_predictions",
    "assemble_level_one",
]

DEFAULT_TRUNCATION = 0.01

_CV_FOLDS = 5
_CV_SEED = 20_240_101  # fixed internal seed: learner fits are deterministic
_N_LAMBDA = 50


class NuisanceError(ValueError):
    pass


class PositivityError(NuisanceError):
    pass


class LearnerError(NuisanceError):
    """Learner failure; carries a diagnostics dict."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class LearnerSpec:
    """Configuration of a nuisance learner.

    ``lambda_grid=None`` means a data-driven 50-point log-spaced grid from the
    smallest penalty that zeroes all coefficients down by four decades.
    """

    kind: str = "elastic-net-logistic"
    expansion_degree: int = 2
    penalty_mix: float = 0.5
    lambda_grid: tuple[float, ...] | None = None
    k_neighbors: int | None = None
    external_path: str | None = None

    def __post_init__(self):
        kinds = ("elastic-net-logistic", "knn", "marginal-mean", "external")
        if self.kind not in kinds:
            raise NuisanceError(f"unknown learner kind {self.kind!r}; expected one of {kinds}")
        if self.kind == "external":
            if self.external_path is None:
                raise NuisanceError("external learner requires external_path")
        elif self.external_path is not None:
            raise NuisanceError(f"external_path is only valid for kind='external', not {self.kind!r}")
        if self.expansion_degree < 1:
            raise NuisanceError("expansion_degree must be >= 1")
        if not 0.0 <= self.penalty_mix <= 1.0:
            raise NuisanceError("penalty_mix must lie in [0, 1]")
        if self.lambda_grid is not None:
            grid = tuple(float(v) for v in self.lambda_grid)
            if any(v <= 0 for v in grid):
                raise NuisanceError("lambda_grid values must be positive")
            object.__setattr__(self, "lambda_grid", grid)


@dataclass(frozen=True)
class NuisanceModel:
    """Fitted nuisance predictions: mu(a, w) in [0, 1] and pi(w) in [c, 1-c]."""

    predict_mu: Callable[[int, np.ndarray], np.ndarray] | None = None
    predict_pi: Callable[[np.ndarray], np.ndarray] | None = None


@dataclass(frozen=True)
class LevelOneData:
    """Out-of-fold nuisance evaluations, one record per observation."""

    index: np.ndarray
    fold: np.ndarray
    tau_hat: np.ndarray
    mu_hat: np.ndarray  # mu evaluated at the realized treatment arm
    pi_hat: np.ndarray
    phi_hat: np.ndarray
    y: np.ndarray
    a: np.ndarray
    K: int
    weights: np.ndarray = field(init=False)  # (1/K) * (1/n_k) per record

    def __post_init__(self):
        n = len(self.index)
        for name in ("index", "fold", "y", "a"):
            arr = np.asarray(getattr(self, name), dtype=int)
            if len(arr) != n:
                raise NuisanceError(f"{name} must have one entry per record")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        for name in ("tau_hat", "mu_hat", "pi_hat", "phi_hat"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if len(arr) != n:
                raise NuisanceError(f"{name} must have one entry per record")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if len(np.unique(self.index)) != n:
            raise NuisanceError("duplicate observation index in level-one data")
        if np.any(self.tau_hat < -1) or np.any(self.tau_hat > 1):
            raise NuisanceError("tau_hat must lie in [-1, 1]")
        if np.any(self.pi_hat <= 0) or np.any(self.pi_hat >= 1):
            raise PositivityError("pi_hat must lie strictly inside (0, 1)")
        fold_sizes = np.bincount(self.fold, minlength=self.K + 1)
        if np.any(fold_sizes[1:] == 0):
            raise NuisanceError("every fold in 1..K must be nonempty")
        weights = 1.0 / (self.K * fold_sizes[self.fold])
        weights.flags.writeable = False
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return len(self.index)


def pseudo_outcome(y, a, mu0, mu1, pi):
    """AIPW pseudo-outcome whose conditional mean given W is the CATE.

    ``(mu1 - mu0) + a*(y - mu1)/pi - (1 - a)*(y - mu0)/(1 - pi)``; accepts
    scalars or arrays.
    """
    pi = np.asarray(pi, dtype=float)
    if np.any(pi <= 0) or np.any(pi >= 1):
        raise PositivityError("propensity must lie strictly inside (0, 1)")
    y = np.asarray(y, dtype=float)
    a = np.asarray(a, dtype=float)
    mu0 = np.asarray(mu0, dtype=float)
    mu1 = np.asarray(mu1, dtype=float)
    out = (mu1 - mu0) + a * (y - mu1) / pi - (1 - a) * (y - mu0) / (1 - pi)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# feature expansion and the elastic-net logistic learner


def expand_features(w: np.ndarray, degree: int) -> np.ndarray:
    """All products of distinct covariates up to the given order, in index order."""
    n, d = w.shape
    cols = []
    for size in range(1, degree + 1):
        for combo in itertools.combinations(range(d), size):
            cols.append(np.prod(w[:, combo], axis=1))
    return np.column_stack(cols) if cols else np.empty((n, 0))


def _outcome_design(w: np.ndarray, a: np.ndarray, degree: int) -> np.ndarray:
    base = expand_features(w, degree)
    a = a.astype(float)[:, None]
    return np.column_stack([base, a, a * base])


class _EnetLogistic:
    """Elastic-net penalized logistic regression on standardized features."""

    def __init__(self, penalty_mix: float, lambda_grid):
        self.mix = penalty_mix
        self.lambda_grid = lambda_grid

    def fit(self, X: np.ndarray, y: np.ndarray):
        self.mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        self.keep_ = sd > 1e-12
        self.sd_ = np.where(self.keep_, sd, 1.0)
        Xs = np.ascontiguousarray((X[:, self.keep_] - self.mean_[self.keep_]) / self.sd_[self.keep_])
        n, p = Xs.shape
        Xs = np.column_stack([np.ones(n), Xs])  # unpenalized intercept first
        penalty = np.ones(p + 1)
        penalty[0] = 0.0

        if self.lambda_grid is not None:
            grid = np.sort(np.asarray(self.lambda_grid, dtype=float))[::-1]
        else:
            score = np.abs(Xs[:, 1:].T @ (y - y.mean())) / n
            lam_max = max(score.max(initial=0.0) / max(self.mix, 1e-3), 1e-6)
            grid = np.geomspace(lam_max, lam_max * 1e-3, _N_LAMBDA)

        if len(grid) > 1:
            lam = self._select_lambda(Xs, y, grid, penalty)
        else:
            lam = grid[0]
        self.lambda_ = lam
        self.beta_ = self._path_fit(Xs, y, grid[grid >= lam], penalty)
        return self

    def _select_lambda(self, Xs, y, grid, penalty):
        n = len(y)
        rng = np.random.default_rng(_CV_SEED)
        order = rng.permutation(n)
        fold_of = np.empty(n, dtype=int)
        fold_of[order] = np.arange(n) % _CV_FOLDS
        deviance = np.zeros(len(grid))
        for f in range(_CV_FOLDS):
            val = fold_of == f
            beta = np.zeros(Xs.shape[1])
            for g, lam in enumerate(grid):
                beta = self._irls(Xs[~val], y[~val], lam, penalty, beta)
                eta = Xs[val] @ beta
                p = _expit(eta)
                p = np.clip(p, 1e-12, 1 - 1e-12)
                deviance[g] += -2.0 * np.sum(y[val] * np.log(p) + (1 - y[val]) * np.log(1 - p))
        best = int(np.argmin(deviance))
        # ties toward the larger penalty
        while best > 0 and deviance[best - 1] <= deviance[best]:
            best -= 1
        return grid[best]

    def _path_fit(self, Xs, y, path, penalty):
        beta = np.zeros(Xs.shape[1])
        for lam in path:
            beta = self._irls(Xs, y, lam, penalty, beta)
        return beta

    def _objective(self, Xs, y, beta, l1, l2):
        eta = np.clip(Xs @ beta, -500, 500)
        nll = np.mean(np.log1p(np.exp(-np.abs(eta))) + np.maximum(eta, 0.0) - y * eta)
        return nll + l1 @ np.abs(beta) + 0.5 * l2 @ beta**2

    def _irls(self, Xs, y, lam, penalty, beta0, max_outer=300, tol=1e-10):
        n = len(y)
        beta = beta0.copy()
        l1 = lam * self.mix * penalty
        l2 = lam * (1.0 - self.mix) * penalty
        obj = self._objective(Xs, y, beta, l1, l2)
        for _ in range(max_outer):
            eta = Xs @ beta
            p = _expit(eta)
            v = np.maximum(p * (1 - p), 1e-5) / n
            z = eta + (y - p) / (n * v)
            _core.enet_coordinate_descent(Xs, np.ascontiguousarray(z),
                                          np.ascontiguousarray(v),
                                          np.ascontiguousarray(l1),
                                          np.ascontiguousarray(l2),
                                          beta, 1000, 1e-14)
            new_obj = self._objective(Xs, y, beta, l1, l2)
            if abs(obj - new_obj) < tol * (abs(new_obj) + 1.0):
                return beta
            obj = new_obj
        raise LearnerError(
            "coordinate descent did not converge",
            {"lambda": float(lam), "max_outer": max_outer,
             "last_objective_change": float(abs(obj - new_obj))},
        )

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        Xs = (X[:, self.keep_] - self.mean_[self.keep_]) / self.sd_[self.keep_]
        eta = self.beta_[0] + Xs @ self.beta_[1:]
        return _expit(eta)

    def n_nonzero(self) -> int:
        return int(np.sum(self.beta_[1:] != 0.0))


def _expit(eta):
    return 1.0 / (1.0 + np.exp(-np.clip(eta, -500, 500)))


# ---------------------------------------------------------------------------
# learner dispatch


def fit_learner(train: Dataset, spec: LearnerSpec, target: str,
                c: float = DEFAULT_TRUNCATION) -> NuisanceModel:
    """Fit a nuisance model on a training subset; deterministic given data and spec."""
    if target not in ("outcome", "propensity"):
        raise NuisanceError(f"target must be 'outcome' or 'propensity', got {target!r}")
    if train.n == 0:
        raise LearnerError("empty training data")
    if target == "outcome" and (train.a.min() == train.a.max()):
        raise LearnerError("outcome model requires both treatment arms in the training data",
                           {"arm": int(train.a[0]), "n": train.n})
    if spec.kind == "external":
        raise NuisanceError("external predictions are ingested via load_external_predictions")

    if spec.kind == "marginal-mean":
        if target == "propensity":
            p = float(np.clip(train.a.mean(), c, 1 - c))
            return NuisanceModel(predict_pi=lambda w: np.full(len(w), p))
        m = float(train.y.mean())
        return NuisanceModel(predict_mu=lambda a, w: np.full(len(w), m))

    if spec.kind == "knn":
        return _fit_knn(train, spec, target, c)

    model_kwargs = dict(penalty_mix=spec.penalty_mix, lambda_grid=spec.lambda_grid)
    if target == "propensity":
        X = expand_features(train.w, spec.expansion_degree)
        model = _EnetLogistic(**model_kwargs).fit(X, train.a.astype(float))

        def predict_pi(w):
            return np.clip(model.predict_proba(expand_features(w, spec.expansion_degree)), c, 1 - c)

        return NuisanceModel(predict_pi=predict_pi)

    X = _outcome_design(train.w, train.a, spec.expansion_degree)
    model = _EnetLogistic(**model_kwargs).fit(X, train.y.astype(float))

    def predict_mu(a, w):
        a_col = np.full(len(w), a, dtype=int)
        return np.clip(model.predict_proba(_outcome_design(w, a_col, spec.expansion_degree)), 0.0, 1.0)

    return NuisanceModel(predict_mu=predict_mu)


def _fit_knn(train: Dataset, spec: LearnerSpec, target: str, c: float) -> NuisanceModel:
    k = spec.k_neighbors or max(1, round(np.sqrt(train.n)))
    mean = train.w.mean(axis=0)
    sd = train.w.std(axis=0)
    sd = np.where(sd > 1e-12, sd, 1.0)
    ws = (train.w - mean) / sd

    def _knn_mean(tree_points, targets, query, kk):
        tree = cKDTree(tree_points)
        kk = min(kk, len(tree_points))
        _, idx = tree.query(query, k=kk)
        if kk == 1:
            idx = idx[:, None] if idx.ndim == 1 else idx
        return targets[idx].mean(axis=1)

    if target == "propensity":
        def predict_pi(w):
            q = (w - mean) / sd
            return np.clip(_knn_mean(ws, train.a.astype(float), q, k), c, 1 - c)

        return NuisanceModel(predict_pi=predict_pi)

    arm_points = {arm: ws[train.a == arm] for arm in (0, 1)}
    arm_y = {arm: train.y[train.a == arm].astype(float) for arm in (0, 1)}

    def predict_mu(a, w):
        q = (w - mean) / sd
        return np.clip(_knn_mean(arm_points[a], arm_y[a], q, k), 0.0, 1.0)

    return NuisanceModel(predict_mu=predict_mu)


# ---------------------------------------------------------------------------
# cross-fitting


def assemble_level_one(data: Dataset, folds: FoldAssignment,
                       mu0: np.ndarray, mu1: np.ndarray, pi: np.ndarray) -> LevelOneData:
    """Build level-one data from per-observation nuisance values (any source)."""
    mu0 = np.asarray(mu0, dtype=float)
    mu1 = np.asarray(mu1, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if np.any((mu0 < 0) | (mu0 > 1)) or np.any((mu1 < 0) | (mu1 > 1)):
        raise NuisanceError("mu values must lie in [0, 1]")
    phi = pseudo_outcome(data.y, data.a, mu0, mu1, pi)
    mu_real = np.where(data.a == 1, mu1, mu0)
    return LevelOneData(
        index=np.arange(data.n),
        fold=folds.fold_of,
        tau_hat=mu1 - mu0,
        mu_hat=mu_real,
        pi_hat=pi,
        phi_hat=phi,
        y=data.y,
        a=data.a,
        K=folds.K,
    )


def cross_fit(data: Dataset, folds: FoldAssignment, outcome_spec: LearnerSpec,
              propensity_spec: LearnerSpec, c: float = DEFAULT_TRUNCATION) -> LevelOneData:
    """Fit nuisances on each fold's complement and evaluate them on the fold."""
    if folds.n != data.n:
        raise NuisanceError("fold assignment does not match the dataset")
    if outcome_spec.kind == "external" or propensity_spec.kind == "external":
        path = outcome_spec.external_path or propensity_spec.external_path
        return load_external_predictions(path, data, folds)

    mu0 = np.empty(data.n)
    mu1 = np.empty(data.n)
    pi = np.empty(data.n)
    for k, idx in enumerate(folds.fold_indices, start=1):
        train_idx = np.setdiff1d(np.arange(data.n), idx)
        train = data.subset(train_idx)
        try:
            outcome = fit_learner(train, outcome_spec, "outcome", c)
            propensity = fit_learner(train, propensity_spec, "propensity", c)
        except NuisanceError as err:
            raise LearnerError(f"fold {k}: {err}",
                               getattr(err, "diagnostics", {})) from err
        w_k = data.w[idx]
        mu0[idx] = outcome.predict_mu(0, w_k)
        mu1[idx] = outcome.predict_mu(1, w_k)
        pi[idx] = propensity.predict_pi(w_k)
    return assemble_level_one(data, folds, mu0, mu1, pi)


def load_external_predictions(path, data: Dataset, folds: FoldAssignment) -> LevelOneData:
    """Ingest per-observation nuisance predictions from a CSV file.

    Expected header: ``row_index,fold,mu0,mu1,pi`` with 0-based row_index into
    the dataset's row order; the fold column must match the fold assignment.
    """
    mu0 = np.full(data.n, np.nan)
    mu1 = np.full(data.n, np.nan)
    pi = np.full(data.n, np.nan)
    seen = np.zeros(data.n, dtype=bool)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"row_index", "fold", "mu0", "mu1", "pi"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DataError(f"external predictions file must have columns {sorted(required)}")
        for rownum, rec in enumerate(reader, start=2):
            try:
                i = int(rec["row_index"])
            except ValueError:
                raise DataError(f"non-integer row_index {rec['row_index']!r}", rownum) from None
            if not 0 <= i < data.n:
                raise DataError(f"row_index {i} out of range for n={data.n}", rownum)
            if seen[i]:
                raise DataError(f"duplicate row_index {i}", rownum)
            seen[i] = True
            if int(rec["fold"]) != folds.fold_of[i]:
                raise DataError(
                    f"fold {rec['fold']} does not match assignment "
                    f"{folds.fold_of[i]} for row_index {i}", rownum)
            mu0[i] = float(rec["mu0"])
            mu1[i] = float(rec["mu1"])
            pi[i] = float(rec["pi"])
            if not 0.0 < pi[i] < 1.0:
                raise PositivityError(f"row {rownum}: pi={pi[i]} violates positivity at row_index {i}")
    if not seen.all():
        missing = int(np.flatnonzero(~seen)[0])
        raise DataError(f"missing prediction for row_index {missing}")
    return assemble_level_one(data, folds, mu0, mu1, pi)
