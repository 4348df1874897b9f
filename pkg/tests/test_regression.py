from math import log, pi

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from shrinkpart.evaluation import obm_variance
from shrinkpart.exceptions import ConfigError, DomainError
from shrinkpart.regression import (ClusterParams, RegressionDataset, RegressionPriors,
                                   beta_conditional, log_likelihood,
                                   marginal_log_likelihood_cluster, pointwise_log_likelihood,
                                   synthesize, tau_conditional, update_beta_star, update_tau)

from tiny_regression import gibbs_draws, quadrature_moments, tiny_data, tiny_priors


def random_slice(rng, n_units=5, obs=3, px=2, pz=2):
    m = n_units * obs
    data = RegressionDataset.from_arrays(rng.normal(size=m), rng.normal(size=(m, px - 1)),
                                         rng.normal(size=(m, pz)),
                                         np.repeat(np.arange(n_units), obs), np.zeros(m))
    return data.slice(0)


def test_zero_residuals_density():
    data = RegressionDataset.from_arrays(np.full(4, 2.0), np.zeros(4), np.zeros(4),
                                         [0, 0, 1, 1], [0] * 4)
    params = ClusterParams((1, 1), np.array([[2.0, 0.0]]), np.zeros(1), 1.0)
    assert log_likelihood(data.slice(0), params) == pytest.approx(2 * log(1 / (2 * pi)))


def test_single_observation_density():
    data = RegressionDataset.from_arrays([0.0], [0.0], [0.0], [0], [0])
    params = ClusterParams((1,), np.zeros((1, 2)), np.zeros(1), 4.0)
    assert log_likelihood(data.slice(0), params) == pytest.approx(0.5 * log(4 / (2 * pi)))


def test_nonpositive_precision_rejected(rng):
    sl = random_slice(rng)
    params = ClusterParams((1,) * 5, np.zeros((1, 2)), np.zeros(2), 0.0)
    with pytest.raises(DomainError):
        log_likelihood(sl, params)


def test_stacked_equals_unit_by_unit(rng):
    sl = random_slice(rng)
    labels = (1, 2, 1, 3, 2)
    params = ClusterParams(labels, rng.normal(size=(3, 2)), rng.normal(size=2), 1.7)
    by_row = 0.0
    for r in range(sl.m):
        mean = sl.X[r] @ params.beta[labels[sl.unit[r]] - 1] + sl.Z[r] @ params.gamma
        by_row += stats.norm.logpdf(sl.y[r], mean, 1 / np.sqrt(params.tau))
    assert log_likelihood(sl, params) == pytest.approx(by_row, rel=1e-12)
    assert pointwise_log_likelihood(sl, params).sum() == pytest.approx(by_row, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.permutations([0, 1, 2]), st.integers(0, 10_000))
def test_likelihood_invariant_to_cluster_renumbering(order, seed):
    rng = np.random.default_rng(seed)
    sl = random_slice(rng)
    labels = np.array([1, 2, 1, 3, 2])
    beta = rng.normal(size=(3, 2))
    gamma = rng.normal(size=2)
    base = log_likelihood(sl, ClusterParams(tuple(labels), beta, gamma, 0.8))
    relabeled = np.array(order)[labels - 1] + 1
    moved = np.empty_like(beta)
    moved[np.array(order)] = beta
    assert log_likelihood(sl, ClusterParams(tuple(relabeled), moved, gamma, 0.8)) == \
        pytest.approx(base, rel=1e-12)


def test_beta_conditional_matches_regression_algebra(rng):
    sl = random_slice(rng)
    pr = RegressionPriors.for_dims(2, 2, beta_precision=3.0)
    members = [0, 2]
    gamma = rng.normal(size=2)
    prec, b = beta_conditional(sl, members, gamma, 2.0, pr)
    rows = np.isin(sl.unit, members)
    X, r = sl.X[rows], sl.y[rows] - sl.Z[rows] @ gamma
    np.testing.assert_allclose(prec, 3.0 * np.eye(2) + 2.0 * X.T @ X)
    np.testing.assert_allclose(b, 3.0 * pr.beta_mean + 2.0 * X.T @ r)


def test_beta_draw_reproducible(rng):
    sl = random_slice(rng)
    pr = RegressionPriors.for_dims(2, 2)
    a = update_beta_star(sl, [1, 3], np.zeros(2), 1.0, pr, np.random.default_rng(4))
    b = update_beta_star(sl, [1, 3], np.zeros(2), 1.0, pr, np.random.default_rng(4))
    np.testing.assert_array_equal(a, b)


def test_tau_conditional_by_hand():
    data = RegressionDataset.from_arrays([1.0, 3.0, -1.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0],
                                         [0, 0, 1], [0, 0, 0])
    pr = RegressionPriors(np.zeros(2), np.eye(2), np.zeros(1), np.eye(1), 2.0, 0.5)
    beta = np.array([[2.0, 0.0], [0.0, 0.0]])
    shape, rate = tau_conditional(data.slice(0), (1, 2), beta, np.zeros(1), pr)
    # residuals -1, 1, -1
    assert shape == 2.0 + 1.5
    assert rate == 0.5 + 1.5


def test_tau_posterior_between_prior_and_data():
    rng = np.random.default_rng(2)
    data, truth = synthesize(n_units=4, n_times=1, obs_per_unit=10, n_clusters=1, px=1,
                             tau=9.0, rng=3)
    sl = data.slice(0)
    pr = RegressionPriors(np.zeros(1), np.eye(1), np.zeros(1), np.eye(1), 2.0, 2.0)
    beta, gamma = truth.beta[0], truth.gamma[0]
    draws = [update_tau(sl, truth.partitions[0], beta, gamma, pr, rng) for _ in range(4000)]
    resid = sl.y - sl.X @ beta[0] - sl.Z @ gamma
    lo, hi = sorted((1.0, 1.0 / np.mean(resid ** 2)))
    assert lo < np.mean(draws) < hi


def test_marginal_likelihood_empty_cluster():
    sl = tiny_data().slice(0)
    assert marginal_log_likelihood_cluster(sl, [], np.zeros(1), 1.0, tiny_priors()) == 0.0


def test_marginal_likelihood_scalar_quadrature():
    data = RegressionDataset.from_arrays([0.7], [1.0], [0.4], [0], [0], add_intercept=False)
    pr = RegressionPriors(np.array([0.2]), np.array([[2.0]]), np.zeros(1), np.eye(1), 1.0, 1.0)
    gamma, tau = np.array([0.5]), 3.0
    closed = marginal_log_likelihood_cluster(data.slice(0), [0], gamma, tau, pr)

    def integrand(b):
        return (stats.norm.pdf(0.7, b + 0.4 * 0.5, 1 / np.sqrt(tau))
                * stats.norm.pdf(b, 0.2, 1 / np.sqrt(2.0)))

    value = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-14, epsrel=1e-12)[0]
    assert closed == pytest.approx(log(value), abs=1e-6)
    # normal-normal marginal: N(0.2 + 0.2, 1/3 + 1/2)
    assert closed == pytest.approx(stats.norm.logpdf(0.7, 0.4, np.sqrt(1 / 3 + 1 / 2)), abs=1e-12)


def test_marginal_likelihood_multivariate_closed_form(rng):
    sl = random_slice(rng)
    pr = RegressionPriors.for_dims(2, 2, beta_mean=[0.3, -0.2], beta_precision=1.5)
    members = [1, 3, 4]
    gamma, tau = rng.normal(size=2), 2.5
    rows = np.isin(sl.unit, members)
    X, r = sl.X[rows], sl.y[rows] - sl.Z[rows] @ gamma
    cov = X @ X.T / 1.5 + np.eye(len(r)) / tau
    expected = stats.multivariate_normal(X @ pr.beta_mean, cov).logpdf(r)
    assert marginal_log_likelihood_cluster(sl, members, gamma, tau, pr) == \
        pytest.approx(expected, rel=1e-10)


def test_marginal_likelihood_factorizes_over_clusters(rng):
    sl = random_slice(rng)
    pr = RegressionPriors.for_dims(2, 2, beta_precision=1.0)
    gamma = rng.normal(size=2)
    joint = marginal_log_likelihood_cluster(sl, [0, 1, 2, 3, 4], gamma, 1.0, pr)
    split = (marginal_log_likelihood_cluster(sl, [0, 1], gamma, 1.0, pr)
             + marginal_log_likelihood_cluster(sl, [2, 3, 4], gamma, 1.0, pr))
    assert joint != pytest.approx(split)


def test_gibbs_moments_match_quadrature():
    exact, _ = quadrature_moments()
    draws = gibbs_draws(sweeps=20000, seed=11)
    se = np.sqrt([obm_variance(draws[:, j]) for j in range(4)])
    z = (draws.mean(axis=0) - exact) / se
    assert np.all(np.abs(z) < 3), z


def test_csv_round_trip(tmp_path, rng):
    data, _ = synthesize(n_units=4, n_times=3, obs_per_unit=2, px=3, pz=2, rng=5)
    path = tmp_path / "panel.csv"
    data.to_csv(path)
    back = RegressionDataset.from_csv(path)
    np.testing.assert_array_equal(back.y, data.y)
    np.testing.assert_array_equal(back.X, data.X)
    np.testing.assert_array_equal(back.Z, data.Z)
    np.testing.assert_array_equal(back.unit, data.unit)
    assert back.unit_ids == data.unit_ids
    assert list(map(int, back.time_ids)) == list(data.time_ids)


def test_csv_ids_indexed_by_first_appearance(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("unit_id,time_id,y,z_1\nb,2020,1,0\na,2019,2,0\nb,2019,3,0\n")
    data = RegressionDataset.from_csv(path)
    assert data.unit_ids == ["b", "a"]
    assert list(data.time_ids) == [2020, 2019]
    np.testing.assert_array_equal(data.unit, [0, 1, 0])
    assert data.px == 1


@pytest.mark.parametrize("text", ["unit_id,y,z_1\na,1,0\n",
                                  "unit_id,time_id,y,x_1\na,1,1,0\n",
                                  "unit_id,time_id,y,z_1\na,1,oops,0\n"])
def test_bad_csv_is_config_error(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ConfigError):
        RegressionDataset.from_csv(path)


def test_missing_csv_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        RegressionDataset.from_csv(tmp_path / "absent.csv")


def test_synthetic_coefficients_recovered_without_noise():
    data, truth = synthesize(n_units=6, n_times=2, obs_per_unit=8, n_clusters=2, px=3,
                             tau=1e16, rng=8)
    for t in range(2):
        sl = data.slice(t)
        labels = np.asarray(truth.partitions[t])
        for c in range(1, labels.max() + 1):
            rows = np.isin(sl.unit, np.flatnonzero(labels == c))
            coef = np.linalg.lstsq(sl.X[rows], sl.y[rows] - sl.Z[rows] @ truth.gamma[t],
                                   rcond=None)[0]
            np.testing.assert_allclose(coef, truth.beta[t][c - 1], atol=1e-6)


def test_zero_drift_keeps_partition():
    _, truth = synthesize(n_units=10, n_times=5, drift=0.0, rng=1)
    assert len(set(truth.partitions)) == 1


def test_synthesis_reproducible(tmp_path):
    for name in ("a.csv", "b.csv"):
        synthesize(rng=42)[0].to_csv(tmp_path / name)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_priors_validate():
    with pytest.raises(DomainError):
        RegressionPriors(np.zeros(2), -np.eye(2), np.zeros(1), np.eye(1))
    pr = RegressionPriors.for_dims(4, 9)
    np.testing.assert_allclose(pr.beta_mean, [1.46, 0.15, 0.24, 0.41])
    assert pr.tau_shape == pytest.approx(1 / 0.361 ** 2)
    back = RegressionPriors.from_config(pr.to_config(), 4, 9)
    np.testing.assert_allclose(back.beta_precision, pr.beta_precision)
