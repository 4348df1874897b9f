"""Cross-validated out-of-sample scoring and posterior summaries."""

from dataclasses import dataclass, field
from math import sqrt
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .exceptions import ConfigError
from .mcmc import McmcConfig, SampleArchive, combine, run_chains
from .partitions import adjusted_rand_index, canonicalize

Z95 = 1.959963984540054


def obm_variance(x) -> float:
    """Variance of the sample mean of an autocorrelated series by overlapping
    batch means with batch size about sqrt(len(x))."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4:
        return float(np.var(x, ddof=1) / n) if n > 1 else float("nan")
    b = max(1, int(np.sqrt(n)))
    csum = np.concatenate([[0.0], np.cumsum(x)])
    batches = (csum[b:] - csum[:-b]) / b
    sigma2 = n * b / ((n - b) * (n - b + 1)) * np.sum((batches - x.mean()) ** 2)
    return float(sigma2 / n)


def crossval_folds(n_rows: int, k: int, seed=None) -> list:
    """``k`` disjoint, exhaustive index sets whose sizes differ by at most one."""
    if k < 2:
        raise ConfigError(f"cross-validation needs at least 2 folds, got {k}")
    if k > n_rows:
        raise ConfigError(f"{k} folds for {n_rows} observations")
    order = np.random.default_rng(seed).permutation(n_rows)
    return [np.sort(f) for f in np.array_split(order, k)]


def coclustering_matrix(draws) -> np.ndarray:
    """Posterior probability that each pair shares a cluster; ``draws`` is (D, n)."""
    draws = np.asarray(draws)
    out = np.zeros((draws.shape[1], draws.shape[1]))
    for row in draws:
        out += row[:, None] == row[None, :]
    return out / len(draws)


def expected_binder_loss(p, cocl) -> float:
    p = np.asarray(p)
    same = p[:, None] == p[None, :]
    return float(np.triu(np.abs(same - cocl), k=1).sum())


def point_estimate(draws) -> tuple:
    """The sampled partition with the smallest expected Binder loss."""
    draws = np.asarray(draws)
    cocl = coclustering_matrix(draws)
    unique = {canonicalize(row) for row in draws}
    return min(sorted(unique), key=lambda p: expected_binder_loss(p, cocl))


def ari_matrix(partitions) -> np.ndarray:
    """Posterior mean ARI between every pair of time points, computed within
    each draw.  ``partitions`` is (D, T, n)."""
    partitions = np.asarray(partitions)
    D, T, _ = partitions.shape
    out = np.eye(T)
    for s in range(T):
        for t in range(s + 1, T):
            val = np.mean([adjusted_rand_index(partitions[d, s], partitions[d, t])
                           for d in range(D)])
            out[s, t] = out[t, s] = val
    return out


def lag_ari_gradient(partitions, lag: int = 5):
    """Per-draw mean ARI between adjacent time points minus mean ARI between
    points ``lag`` apart; returns (mean difference, its standard error)."""
    partitions = np.asarray(partitions)
    D, T, _ = partitions.shape
    if T <= lag:
        raise ConfigError(f"need more than {lag} time points")
    diffs = np.empty(D)
    for d in range(D):
        near = np.mean([adjusted_rand_index(partitions[d, t], partitions[d, t + 1])
                        for t in range(T - 1)])
        far = np.mean([adjusted_rand_index(partitions[d, t], partitions[d, t + lag])
                       for t in range(T - lag)])
        diffs[d] = near - far
    return float(diffs.mean()), sqrt(obm_variance(diffs))


@dataclass
class CrossValResult:
    """Summed expected held-out log-likelihood with a 95% Monte Carlo margin."""

    score: float
    margin: float
    fold_scores: list
    fold_variances: list
    cpu_seconds: float
    archives: list = field(default_factory=list, repr=False)

    @property
    def interval(self):
        return self.score - self.margin, self.score + self.margin


def cross_validate(data, kind, config: McmcConfig, folds: int = 10, seed=None,
                   priors=None, keep_archives: bool = False) -> CrossValResult:
    """Fit on all but one shard and score the held-out shard, for each shard.

    A fold's score is the posterior mean over draws of the held-out
    log-likelihood; the total is the sum over folds and its variance the sum
    of the per-fold batch-means variances.
    """
    seed = config.seed if seed is None else seed
    shards = crossval_folds(len(data), folds, seed)
    scores, variances, archives = [], [], []
    cpu = 0.0
    for f, rows in enumerate(shards):
        train = np.ones(len(data), dtype=bool)
        train[rows] = False
        cfg = McmcConfig(**{**config.to_config(), "seed": int(
            np.random.SeedSequence([int(config.seed), f]).generate_state(1)[0])})
        runs = run_chains(kind, cfg, data.subset(train), priors, data.subset(rows))
        held = np.concatenate([a.heldout for a in runs])
        scores.append(float(held.mean()))
        # chains are independent, so pool their per-chain variances
        variances.append(float(np.sum([obm_variance(a.heldout) for a in runs]) / len(runs) ** 2))
        cpu += sum(a.cpu_seconds for a in runs)
        if keep_archives:
            archives.append(combine(runs))
    total_var = float(np.sum(variances))
    return CrossValResult(float(np.sum(scores)), Z95 * sqrt(total_var), scores, variances,
                          cpu, archives)


@dataclass
class FitSummary:
    point_estimates: list
    coclustering: list
    ari: np.ndarray
    cpu_seconds: float
    crossval: CrossValResult = None

    def write(self, out) -> None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        rows = [(t + 1, ",".join(map(str, p))) for t, p in enumerate(self.point_estimates)]
        pd.DataFrame(rows, columns=["t", "labels"]).to_csv(out / "point_estimates.csv", index=False)
        for t, m in enumerate(self.coclustering):
            pd.DataFrame(m).to_csv(out / f"coclustering_t{t + 1}.csv", index=False,
                                   float_format="%.17g")
        pd.DataFrame(self.ari).to_csv(out / "ari_matrix.csv", index=False, float_format="%.17g")
        report = {"cpu_seconds": float(self.cpu_seconds)}
        if self.crossval is not None:
            cv = self.crossval
            report["out_of_sample"] = {"score": cv.score, "margin": cv.margin,
                                       "fold_scores": cv.fold_scores,
                                       "cpu_seconds": float(cv.cpu_seconds)}
        with open(out / "summary.yaml", "w") as fh:
            yaml.safe_dump(report, fh, sort_keys=False)


def summarize_archive(archive: SampleArchive, crossval: CrossValResult = None) -> FitSummary:
    parts = archive.partitions
    T = parts.shape[1]
    return FitSummary([point_estimate(parts[:, t]) for t in range(T)],
                      [coclustering_matrix(parts[:, t]) for t in range(T)],
                      ari_matrix(parts) if T > 1 else np.eye(T), archive.cpu_seconds, crossval)
