"""Nuisance learners, cross-fitting, and external prediction ingestion."""

import numpy as np
import pytest

import hetcurve as hc
from hetcurve.dataset import DataError, Dataset, partition_folds
from hetcurve.nuisance import (LearnerError, LearnerSpec, LevelOneData,
                               NuisanceError, PositivityError,
                               assemble_level_one, cross_fit, expand_features,
                               fit_learner, load_external_predictions,
                               pseudo_outcome)


def _simple_data(n=200, seed=0, beta1=2.0):
    return hc.draw(hc.SimpleDgm(beta1=beta1), n, seed)


def test_pseudo_outcome_identity():
    # with true nuisances and a=1: (mu1-mu0) + (y-mu1)/pi
    assert pseudo_outcome(1, 1, 0.2, 0.7, 0.5) == pytest.approx(0.5 + 0.3 / 0.5)
    assert pseudo_outcome(0, 0, 0.2, 0.7, 0.5) == pytest.approx(0.5 + 0.2 / 0.5)


def test_pseudo_outcome_unbiased_for_cate(rng):
    # E[phi | W] = tau(W) under the truth: check by large-sample average
    dgm = hc.SimpleDgm(beta1=1.5)
    d = hc.draw(dgm, 200_000, 3)
    phi = pseudo_outcome(d.y, d.a, dgm.mu(0, d.w), dgm.mu(1, d.w), dgm.pi(d.w))
    assert phi.mean() == pytest.approx(dgm.tau(d.w).mean(), abs=0.01)


def test_pseudo_outcome_positivity():
    with pytest.raises(PositivityError):
        pseudo_outcome(1, 1, 0.5, 0.5, 0.0)


def test_expand_features_degree2():
    w = np.array([[1.0, 2.0, 3.0]])
    X = expand_features(w, 2)
    # three mains plus the three pairwise products, in index order
    assert np.allclose(X[0], [1, 2, 3, 2, 3, 6])


def test_learner_spec_validation():
    with pytest.raises(NuisanceError):
        LearnerSpec(kind="boost")
    with pytest.raises(NuisanceError):
        LearnerSpec(kind="external")
    with pytest.raises(NuisanceError):
        LearnerSpec(expansion_degree=0)
    with pytest.raises(NuisanceError):
        LearnerSpec(penalty_mix=1.5)
    with pytest.raises(NuisanceError):
        LearnerSpec(lambda_grid=(0.1, -0.2))
    with pytest.raises(NuisanceError):
        LearnerSpec(kind="knn", external_path="x.csv")


def test_marginal_mean_learner():
    d = _simple_data(100, 1)
    m = fit_learner(d, LearnerSpec(kind="marginal-mean"), "outcome")
    assert np.allclose(m.predict_mu(1, d.w[:5]), d.y.mean())
    p = fit_learner(d, LearnerSpec(kind="marginal-mean"), "propensity")
    assert np.allclose(p.predict_pi(d.w[:5]), np.clip(d.a.mean(), 0.01, 0.99))


def test_outcome_learner_needs_both_arms():
    d = _simple_data(50, 2)
    one_arm = d.subset(np.flatnonzero(d.a == 1))
    with pytest.raises(LearnerError, match="both treatment arms"):
        fit_learner(one_arm, LearnerSpec(), "outcome")


def test_knn_learner_constant_outcome():
    w = np.linspace(-1, 1, 40)[:, None]
    d = Dataset(w, np.tile([0, 1], 20), np.ones(40, dtype=int), ("w",))
    m = fit_learner(d, LearnerSpec(kind="knn", k_neighbors=5), "outcome")
    assert np.allclose(m.predict_mu(1, w), 1.0)


def test_knn_propensity_truncated():
    w = np.linspace(-1, 1, 40)[:, None]
    d = Dataset(w, np.ones(40, dtype=int), np.ones(40, dtype=int), ("w",))
    p = fit_learner(d, LearnerSpec(kind="knn", k_neighbors=5), "propensity", c=0.05)
    assert np.allclose(p.predict_pi(w), 0.95)


def test_enet_recovers_signal():
    # strong separable signal: predictions should track the truth closely
    dgm = hc.SimpleDgm(beta1=3.0)
    d = hc.draw(dgm, 4000, 5)
    m = fit_learner(d, LearnerSpec(), "outcome")
    pred = m.predict_mu(1, d.w)
    truth = dgm.mu(1, d.w)
    assert np.mean((pred - truth) ** 2) < 0.01


def test_enet_deterministic():
    d = _simple_data(300, 9)
    m1 = fit_learner(d, LearnerSpec(), "outcome")
    m2 = fit_learner(d, LearnerSpec(), "outcome")
    assert np.array_equal(m1.predict_mu(1, d.w), m2.predict_mu(1, d.w))


def test_enet_explicit_lambda_grid():
    d = _simple_data(150, 4)
    m = fit_learner(d, LearnerSpec(lambda_grid=(0.05,)), "outcome")
    assert np.all((m.predict_mu(0, d.w) >= 0) & (m.predict_mu(0, d.w) <= 1))


def test_cross_fit_out_of_fold_only():
    # learners see only the complement: make fold 1's outcome all 1, fold 2's
    # all 0; a marginal-mean fit predicts the *other* fold's mean
    n = 40
    folds = partition_folds(n, 2, 0)
    y = np.where(folds.fold_of == 1, 1, 0)
    d = Dataset(np.random.default_rng(0).normal(size=(n, 1)),
                np.tile([0, 1], n // 2), y, ("w",))
    l1 = cross_fit(d, folds, LearnerSpec(kind="marginal-mean"),
                   LearnerSpec(kind="marginal-mean"))
    assert np.allclose(l1.mu_hat[folds.fold_of == 1], 0.0)
    assert np.allclose(l1.mu_hat[folds.fold_of == 2], 1.0)


def test_cross_fit_weights_average_of_fold_means():
    d = _simple_data(101, 6)
    folds = partition_folds(101, 3, 1)
    l1 = cross_fit(d, folds, LearnerSpec(kind="marginal-mean"),
                   LearnerSpec(kind="marginal-mean"))
    assert l1.weights.sum() == pytest.approx(1.0, abs=1e-12)
    for k, idx in enumerate(folds.fold_indices, start=1):
        assert np.allclose(l1.weights[idx], 1.0 / (3 * len(idx)))


def test_cross_fit_fold_error_annotated():
    # fold 2's complement contains a single treatment arm -> annotated error
    w = np.zeros((8, 1))
    folds = partition_folds(8, 2, 0)
    a = np.where(folds.fold_of == 2, np.tile([0, 1], 4), 1)
    a[folds.fold_of == 1] = 1
    d = Dataset(w, a, np.tile([0, 1], 4), ("w",))
    with pytest.raises(LearnerError, match=r"fold \d:"):
        cross_fit(d, folds, LearnerSpec(), LearnerSpec(kind="marginal-mean"))


def test_level_one_invariants():
    base = dict(index=[0, 1], fold=[1, 2], mu_hat=[0.5, 0.5], y=[0, 1], a=[0, 1], K=2)
    with pytest.raises(NuisanceError, match="tau_hat"):
        LevelOneData(tau_hat=[1.5, 0.0], pi_hat=[0.5, 0.5], phi_hat=[0, 0], **base)
    with pytest.raises(PositivityError):
        LevelOneData(tau_hat=[0.0, 0.0], pi_hat=[0.0, 0.5], phi_hat=[0, 0], **base)
    with pytest.raises(NuisanceError, match="duplicate"):
        LevelOneData(index=[0, 0], fold=[1, 2], tau_hat=[0, 0], mu_hat=[0.5, 0.5],
                     pi_hat=[0.5, 0.5], phi_hat=[0, 0], y=[0, 1], a=[0, 1], K=2)


def test_assemble_rejects_bad_mu():
    d = _simple_data(10, 0)
    folds = partition_folds(10, 2, 0)
    with pytest.raises(NuisanceError, match="mu values"):
        assemble_level_one(d, folds, np.full(10, -0.1), np.full(10, 0.5), np.full(10, 0.5))


def _write_external(path, data, folds, mutate=None):
    import csv
    rows = [{"row_index": i, "fold": int(folds.fold_of[i]),
             "mu0": 0.4, "mu1": 0.6, "pi": 0.5} for i in range(data.n)]
    if mutate:
        mutate(rows)
    with open(path, "w", newline="") as fh:
        wtr = csv.DictWriter(fh, fieldnames=["row_index", "fold", "mu0", "mu1", "pi"])
        wtr.writeheader()
        wtr.writerows(rows)


def test_external_predictions_roundtrip(tmp_path):
    d = _simple_data(20, 3)
    folds = partition_folds(20, 2, 1)
    path = tmp_path / "pred.csv"
    _write_external(path, d, folds)
    l1 = load_external_predictions(path, d, folds)
    assert np.allclose(l1.tau_hat, 0.2)
    assert np.allclose(l1.pi_hat, 0.5)  # values echoed, not truncated
    assert np.array_equal(l1.fold, folds.fold_of)


@pytest.mark.parametrize("mutate,err,fragment", [
    (lambda r: r.pop(), DataError, "missing prediction"),
    (lambda r: r.__setitem__(0, dict(r[1])), DataError, "duplicate row_index"),
    (lambda r: r[0].__setitem__("fold", 99), DataError, "does not match"),
    (lambda r: r[0].__setitem__("pi", 0.0), PositivityError, "positivity"),
    (lambda r: r[0].__setitem__("row_index", "x"), DataError, "non-integer"),
    (lambda r: r[0].__setitem__("row_index", 999), DataError, "out of range"),
])
def test_external_predictions_errors(tmp_path, mutate, err, fragment):
    d = _simple_data(20, 3)
    folds = partition_folds(20, 2, 1)
    path = tmp_path / "pred.csv"
    _write_external(path, d, folds, mutate)
    with pytest.raises(err, match=fragment):
        load_external_predictions(path, d, folds)


def test_external_predictions_missing_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("row_index,mu0\n0,0.5\n")
    d = _simple_data(1 + 3, 3)
    with pytest.raises(DataError, match="columns"):
        load_external_predictions(path, d, partition_folds(4, 2, 0))
