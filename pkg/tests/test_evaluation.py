import numpy as np
import pytest
import yaml
from hypothesis import given, settings, strategies as st

from shrinkpart.evaluation import (FitSummary, coclustering_matrix, crossval_folds,
                                   cross_validate, expected_binder_loss, lag_ari_gradient,
                                   obm_variance, point_estimate, summarize_archive)
from shrinkpart.exceptions import ConfigError
from shrinkpart.mcmc import Independent, McmcConfig, Temporal, run_chain
from shrinkpart.regression import RegressionPriors, synthesize


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 200), st.integers(2, 20), st.integers(0, 1000))
def test_folds_disjoint_exhaustive_balanced(n_rows, k, seed):
    if k > n_rows:
        with pytest.raises(ConfigError):
            crossval_folds(n_rows, k, seed)
        return
    folds = crossval_folds(n_rows, k, seed)
    assert len(folds) == k
    joined = np.concatenate(folds)
    assert sorted(joined) == list(range(n_rows))
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1


def test_folds_reproducible():
    a = crossval_folds(50, 5, 3)
    b = crossval_folds(50, 5, 3)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_coclustering_symmetric_unit_diagonal(rng):
    draws = rng.integers(1, 4, size=(40, 6))
    m = coclustering_matrix(draws)
    np.testing.assert_allclose(m, m.T)
    np.testing.assert_allclose(np.diag(m), 1.0)
    assert m.min() >= 0 and m.max() <= 1


def test_point_estimate_identical_draws():
    draws = np.array([[2, 2, 1, 1]] * 10)
    assert point_estimate(draws) == (1, 1, 2, 2)


def test_point_estimate_majority():
    draws = np.array([[1, 1, 2]] * 9 + [[1, 2, 3]])
    assert point_estimate(draws) == (1, 1, 2)


def test_binder_loss_zero_for_certain_partition():
    cocl = coclustering_matrix(np.array([[1, 2, 1]] * 3))
    assert expected_binder_loss((1, 2, 1), cocl) == 0.0
    assert expected_binder_loss((1, 1, 1), cocl) == 2.0


def test_obm_variance_iid():
    rng = np.random.default_rng(1)
    x = rng.normal(size=40000)
    assert obm_variance(x) == pytest.approx(1 / 40000, rel=0.15)


def test_obm_variance_ar1_exceeds_naive():
    rng = np.random.default_rng(2)
    x = np.zeros(40000)
    for i in range(1, len(x)):
        x[i] = 0.9 * x[i - 1] + rng.normal()
    naive = x.var() / len(x)
    # true inflation (1 + 0.9) / (1 - 0.9) = 19
    assert obm_variance(x) / naive == pytest.approx(19, rel=0.25)


def test_lag_gradient_for_constant_partitions():
    parts = np.tile(np.array([1, 1, 2, 2, 3]), (20, 8, 1))
    mean, se = lag_ari_gradient(parts, lag=5)
    assert mean == 0.0 and se == 0.0
    with pytest.raises(ConfigError):
        lag_ari_gradient(parts[:, :5], lag=5)


def test_cross_validation_and_summary(tmp_path):
    data, _ = synthesize(n_units=5, n_times=2, obs_per_unit=2, rng=3)
    pri = RegressionPriors.for_dims(2, 1, beta_precision=1.0)
    cfg = McmcConfig(iterations=60, burn_in=10, thin=1, seed=4)
    res = cross_validate(data, Independent(), cfg, folds=3, priors=pri, keep_archives=True)
    assert len(res.fold_scores) == 3 and np.isfinite(res.score)
    assert res.score == pytest.approx(sum(res.fold_scores))
    assert res.margin > 0
    lo, hi = res.interval
    assert lo < res.score < hi
    again = cross_validate(data, Independent(), cfg, folds=3, priors=pri)
    assert again.score == res.score

    archive = run_chain(Temporal(), cfg, data, pri)
    summary = summarize_archive(archive, res)
    assert len(summary.point_estimates) == 2
    np.testing.assert_allclose(np.diag(summary.ari), 1.0)
    summary.write(tmp_path)
    report = yaml.safe_load((tmp_path / "summary.yaml").read_text())
    assert report["out_of_sample"]["score"] == pytest.approx(res.score)
    assert (tmp_path / "coclustering_t2.csv").exists()
    assert isinstance(summary, FitSummary)
