"""Clustered Gaussian panel regression.

Observation ``y`` of unit ``i`` at time ``t`` has mean ``x @ beta[c] + z @ gamma_t``
where ``c`` is the cluster of ``i`` at ``t``, and precision ``tau_t``.
Cluster coefficients have a normal prior with a precision matrix, the
global coefficients likewise, and ``tau_t`` a gamma prior (shape, rate).
"""

from dataclasses import dataclass, field
from math import log, pi

import numpy as np
import pandas as pd

from . import _kernels as K
from .exceptions import ConfigError, DomainError
from .partitions import canonicalize

DEFAULT_BETA_MEAN = (1.46, 0.15, 0.24, 0.41)
DEFAULT_BETA_PRECISION = 100.0
DEFAULT_TAU_SHAPE = 1.0 / 0.361 ** 2
DEFAULT_TAU_RATE = 1.0


@dataclass
class RegressionDataset:
    """Long-format panel: one row per observation.

    ``X`` already carries the intercept column.  ``unit`` and ``time`` are
    dense 0-based indices; ``unit_ids``/``time_ids`` hold the original ids.
    """

    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    unit: np.ndarray
    time: np.ndarray
    unit_ids: list
    time_ids: list

    def __post_init__(self):
        rows = len(self.y)
        if not (self.X.shape[0] == self.Z.shape[0] == len(self.unit) == len(self.time) == rows):
            raise DomainError("y, X, Z, unit and time must have the same number of rows")
        if self.X.ndim != 2 or self.Z.ndim != 2:
            raise DomainError("X and Z must be matrices")

    @property
    def n_units(self) -> int:
        return len(self.unit_ids)

    @property
    def n_times(self) -> int:
        return len(self.time_ids)

    @property
    def px(self) -> int:
        return self.X.shape[1]

    @property
    def pz(self) -> int:
        return self.Z.shape[1]

    def __len__(self):
        return len(self.y)

    def subset(self, rows) -> "RegressionDataset":
        """Rows selected by index or mask; unit and time indexing is kept."""
        return RegressionDataset(self.y[rows], self.X[rows], self.Z[rows], self.unit[rows],
                                 self.time[rows], self.unit_ids, self.time_ids)

    def slice(self, t: int) -> "TimeSlice":
        return TimeSlice.build(self, t)

    @classmethod
    def from_arrays(cls, y, x, z, unit, time, add_intercept: bool = True):
        unit_codes, unit_ids = pd.factorize(pd.Series(unit), sort=False)
        time_codes, time_ids = pd.factorize(pd.Series(time), sort=False)
        x = np.asarray(x, dtype=float).reshape(len(y), -1)
        if add_intercept:
            x = np.column_stack([np.ones(len(y)), x])
        z = np.asarray(z, dtype=float).reshape(len(y), -1)
        return cls(np.asarray(y, dtype=float), x, z, unit_codes.astype(np.int64),
                   time_codes.astype(np.int64), list(unit_ids), list(time_ids))

    @classmethod
    def from_csv(cls, path) -> "RegressionDataset":
        try:
            frame = pd.read_csv(path, float_precision="round_trip")
        except (OSError, pd.errors.ParserError) as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        missing = {"unit_id", "time_id", "y"} - set(frame.columns)
        if missing:
            raise ConfigError(f"{path}: missing columns {sorted(missing)}")
        xcols = sorted((c for c in frame.columns if c.startswith("x_")), key=lambda c: int(c[2:]))
        zcols = sorted((c for c in frame.columns if c.startswith("z_")), key=lambda c: int(c[2:]))
        if not zcols:
            raise ConfigError(f"{path}: at least one z_ column is required")
        body = frame[["y"] + xcols + zcols]
        if body.isna().any().any():
            raise ConfigError(f"{path}: missing values")
        try:
            body = body.astype(float)
        except ValueError as exc:
            raise ConfigError(f"{path}: non-numeric data: {exc}") from exc
        return cls.from_arrays(body["y"].to_numpy(), body[xcols].to_numpy(),
                               body[zcols].to_numpy(), frame["unit_id"].to_numpy(),
                               frame["time_id"].to_numpy())

    def to_frame(self) -> pd.DataFrame:
        cols = {"unit_id": np.asarray(self.unit_ids, dtype=object)[self.unit],
                "time_id": np.asarray(self.time_ids, dtype=object)[self.time], "y": self.y}
        for j in range(1, self.px):
            cols[f"x_{j}"] = self.X[:, j]
        for j in range(self.pz):
            cols[f"z_{j + 1}"] = self.Z[:, j]
        return pd.DataFrame(cols)

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


@dataclass
class RegressionPriors:
    beta_mean: np.ndarray
    beta_precision: np.ndarray
    gamma_mean: np.ndarray
    gamma_precision: np.ndarray
    tau_shape: float = DEFAULT_TAU_SHAPE
    tau_rate: float = DEFAULT_TAU_RATE

    def __post_init__(self):
        self.beta_mean = np.atleast_1d(np.asarray(self.beta_mean, dtype=float))
        self.gamma_mean = np.atleast_1d(np.asarray(self.gamma_mean, dtype=float))
        self.beta_precision = np.atleast_2d(np.asarray(self.beta_precision, dtype=float))
        self.gamma_precision = np.atleast_2d(np.asarray(self.gamma_precision, dtype=float))
        for name, mean, prec in (("beta", self.beta_mean, self.beta_precision),
                                 ("gamma", self.gamma_mean, self.gamma_precision)):
            if prec.shape != (len(mean), len(mean)):
                raise DomainError(f"{name} precision shape {prec.shape} != {len(mean)}x{len(mean)}")
            if not np.allclose(prec, prec.T):
                raise DomainError(f"{name} precision is not symmetric")
            try:
                np.linalg.cholesky(prec)
            except np.linalg.LinAlgError as exc:
                raise DomainError(f"{name} precision is not positive definite") from exc
        if not (self.tau_shape > 0 and self.tau_rate > 0):
            raise DomainError("tau shape and rate must be positive")
        self.beta_lm = self.beta_precision @ self.beta_mean
        self.beta_mlm = float(self.beta_mean @ self.beta_lm)
        self.beta_logdet = float(np.linalg.slogdet(self.beta_precision)[1])

    @classmethod
    def for_dims(cls, px: int, pz: int, beta_mean=None, beta_precision=DEFAULT_BETA_PRECISION,
                 gamma_precision=1.0, tau_shape=DEFAULT_TAU_SHAPE, tau_rate=DEFAULT_TAU_RATE):
        """Defaults sized to the data; the default cluster-coefficient mean is
        used when it has the right length, else zeros."""
        if beta_mean is None:
            beta_mean = DEFAULT_BETA_MEAN if px == len(DEFAULT_BETA_MEAN) else np.zeros(px)
        return cls(np.asarray(beta_mean, dtype=float), beta_precision * np.eye(px),
                   np.zeros(pz), gamma_precision * np.eye(pz), tau_shape, tau_rate)

    @classmethod
    def from_config(cls, cfg: dict, px: int, pz: int) -> "RegressionPriors":
        cfg = dict(cfg or {})
        try:
            bm = cfg.get("beta_mean")
            bp = cfg.get("beta_precision", DEFAULT_BETA_PRECISION)
            gm = cfg.get("gamma_mean", 0.0)
            gp = cfg.get("gamma_precision", 1.0)
            out = cls.for_dims(px, pz, bm, 1.0, 1.0, float(cfg.get("tau_shape", DEFAULT_TAU_SHAPE)),
                               float(cfg.get("tau_rate", DEFAULT_TAU_RATE)))
            out.beta_precision = _as_precision(bp, px)
            out.gamma_mean = np.broadcast_to(np.asarray(gm, dtype=float), (pz,)).copy()
            out.gamma_precision = _as_precision(gp, pz)
            out.__post_init__()
            return out
        except (DomainError, ValueError) as exc:
            raise ConfigError(f"regression priors: {exc}") from exc

    def to_config(self) -> dict:
        return {"beta_mean": self.beta_mean.tolist(),
                "beta_precision": self.beta_precision.tolist(),
                "gamma_mean": self.gamma_mean.tolist(),
                "gamma_precision": self.gamma_precision.tolist(),
                "tau_shape": float(self.tau_shape), "tau_rate": float(self.tau_rate)}


def _as_precision(value, p: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(p)
    if arr.ndim == 1:
        return np.diag(arr)
    return arr


@dataclass
class TimeSlice:
    """Rows of one time point plus per-unit sufficient statistics."""

    t: int
    n_units: int
    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    unit: np.ndarray
    xtx: np.ndarray = field(repr=False)
    xty: np.ndarray = field(repr=False)
    xtz: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    ztz: np.ndarray = field(repr=False)
    zty: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, data: RegressionDataset, t: int) -> "TimeSlice":
        rows = data.time == t
        y, X, Z, unit = data.y[rows], data.X[rows], data.Z[rows], data.unit[rows]
        n = data.n_units
        xtx = np.zeros((n, data.px, data.px))
        xty = np.zeros((n, data.px))
        xtz = np.zeros((n, data.px, data.pz))
        np.add.at(xtx, unit, X[:, :, None] * X[:, None, :])
        np.add.at(xty, unit, X * y[:, None])
        np.add.at(xtz, unit, X[:, :, None] * Z[:, None, :])
        counts = np.bincount(unit, minlength=n).astype(float)
        return cls(t, n, y, X, Z, unit, xtx, xty, xtz, counts, Z.T @ Z, Z.T @ y)

    @property
    def m(self) -> int:
        return len(self.y)

    def residual_stats(self, gamma):
        """Per-unit X'r and r'r with r = y - Z gamma."""
        r = self.y - self.Z @ gamma
        xtr = self.xty - self.xtz @ gamma
        rtr = np.bincount(self.unit, weights=r * r, minlength=self.n_units)
        return xtr, rtr


@dataclass
class ClusterParams:
    """Regression unknowns at one time point; ``labels`` is canonical and
    ``beta[c - 1]`` belongs to cluster ``c``."""

    labels: tuple
    beta: np.ndarray
    gamma: np.ndarray
    tau: float

    def __post_init__(self):
        if self.beta.shape[0] != max(self.labels):
            raise DomainError(f"{self.beta.shape[0]} coefficient rows for {max(self.labels)} clusters")


def _check_tau(tau: float) -> None:
    if not tau > 0:
        raise DomainError(f"precision must be positive, got {tau}")


def row_means(sl: TimeSlice, labels, beta, gamma) -> np.ndarray:
    lab = np.asarray(labels, dtype=np.int64)
    return np.einsum("ij,ij->i", sl.X, beta[lab[sl.unit] - 1]) + sl.Z @ gamma


def log_likelihood(sl: TimeSlice, params: ClusterParams) -> float:
    """Gaussian log-likelihood of every row at the slice's time point."""
    _check_tau(params.tau)
    resid = sl.y - row_means(sl, params.labels, params.beta, params.gamma)
    return float(0.5 * sl.m * log(params.tau / (2 * pi)) - 0.5 * params.tau * resid @ resid)


def pointwise_log_likelihood(sl: TimeSlice, params: ClusterParams) -> np.ndarray:
    _check_tau(params.tau)
    resid = sl.y - row_means(sl, params.labels, params.beta, params.gamma)
    return 0.5 * log(params.tau / (2 * pi)) - 0.5 * params.tau * resid * resid


def _draw_normal(prec, b, rng) -> np.ndarray:
    chol = np.linalg.cholesky(prec)
    mean = np.linalg.solve(chol.T, np.linalg.solve(chol, b))
    return mean + np.linalg.solve(chol.T, rng.standard_normal(len(b)))


def beta_conditional(sl: TimeSlice, members, gamma, tau, priors: RegressionPriors):
    """Posterior precision and precision-weighted mean of one cluster's coefficients."""
    _check_tau(tau)
    xtr, _ = sl.residual_stats(gamma)
    members = np.asarray(members, dtype=np.int64)
    prec = priors.beta_precision + tau * sl.xtx[members].sum(axis=0)
    b = priors.beta_lm + tau * xtr[members].sum(axis=0)
    return prec, b


def update_beta_star(sl: TimeSlice, members, gamma, tau, priors: RegressionPriors,
                     rng) -> np.ndarray:
    prec, b = beta_conditional(sl, members, gamma, tau, priors)
    return _draw_normal(prec, b, rng)


def update_all_beta(sl: TimeSlice, labels, gamma, tau, priors: RegressionPriors,
                    rng) -> np.ndarray:
    lab = np.asarray(labels, dtype=np.int64)
    return np.array([update_beta_star(sl, np.flatnonzero(lab == c), gamma, tau, priors, rng)
                     for c in range(1, lab.max() + 1)])


def gamma_conditional(sl: TimeSlice, labels, beta, tau, priors: RegressionPriors):
    _check_tau(tau)
    lab = np.asarray(labels, dtype=np.int64)
    fit_x = np.einsum("ij,ij->i", sl.X, beta[lab[sl.unit] - 1])
    prec = priors.gamma_precision + tau * sl.ztz
    b = priors.gamma_precision @ priors.gamma_mean + tau * sl.Z.T @ (sl.y - fit_x)
    return prec, b


def update_gamma(sl: TimeSlice, labels, beta, tau, priors: RegressionPriors, rng) -> np.ndarray:
    prec, b = gamma_conditional(sl, labels, beta, tau, priors)
    return _draw_normal(prec, b, rng)


def tau_conditional(sl: TimeSlice, labels, beta, gamma, priors: RegressionPriors):
    """Shape and rate of the gamma full conditional of the precision."""
    resid = sl.y - row_means(sl, labels, beta, gamma)
    return priors.tau_shape + 0.5 * sl.m, priors.tau_rate + 0.5 * float(resid @ resid)


def update_tau(sl: TimeSlice, labels, beta, gamma, priors: RegressionPriors, rng) -> float:
    shape, rate = tau_conditional(sl, labels, beta, gamma, priors)
    return float(rng.gamma(shape, 1.0 / rate))


def marginal_log_likelihood_cluster(sl: TimeSlice, members, gamma, tau,
                                    priors: RegressionPriors) -> float:
    """Log-likelihood of the cluster's rows with its coefficients integrated
    out against their prior; 0 for an empty cluster."""
    _check_tau(tau)
    members = np.asarray(members, dtype=np.int64)
    if len(members) == 0:
        return 0.0
    xtr, rtr = sl.residual_stats(gamma)
    return float(K._log_ml(sl.xtx[members].sum(axis=0), xtr[members].sum(axis=0),
                           float(rtr[members].sum()), float(sl.counts[members].sum()),
                           float(tau), priors.beta_precision, priors.beta_lm,
                           priors.beta_mlm, priors.beta_logdet))


def gibbs_step(sl: TimeSlice, params: ClusterParams, priors: RegressionPriors,
               rng) -> ClusterParams:
    """One sweep of beta (all clusters), gamma and tau at a fixed partition."""
    beta = update_all_beta(sl, params.labels, params.gamma, params.tau, priors, rng)
    gamma = update_gamma(sl, params.labels, beta, params.tau, priors, rng)
    tau = update_tau(sl, params.labels, beta, gamma, priors, rng)
    return ClusterParams(params.labels, beta, gamma, tau)


@dataclass
class SyntheticTruth:
    partitions: list
    beta: list
    gamma: np.ndarray
    tau: np.ndarray


def drifting_partitions(n_units: int, n_times: int, n_clusters: int, drift: float,
                        rng, initial=None) -> list:
    """Raw cluster labels (1-based, not canonical) per time point; each unit
    switches to a uniformly chosen other cluster with probability ``drift``
    at each step, so a label means the same cluster at every time."""
    if not 0 <= drift <= 1:
        raise DomainError(f"drift must lie in [0, 1], got {drift}")
    current = (np.asarray(initial, dtype=np.int64) - 1 if initial is not None
               else rng.integers(0, n_clusters, size=n_units))
    out = [current.copy()]
    for _ in range(1, n_times):
        current = current.copy()
        for i in np.flatnonzero(rng.random(n_units) < drift):
            current[i] = (current[i] + rng.integers(1, n_clusters)) % n_clusters
        out.append(current)
    return [tuple(int(v) + 1 for v in p) for p in out]


def synthesize(n_units: int = 20, n_times: int = 10, obs_per_unit: int = 5,
               n_clusters: int = 3, drift: float = 0.1, px: int = 2, pz: int = 1,
               centers=None, center_scale: float = 1.0, gamma_scale: float = 0.5,
               tau: float = 4.0, partitions=None, rng=None):
    """Simulate a panel with known partitions.

    Raw cluster ``c`` has coefficients ``centers[c - 1]`` at every time; the
    label sequence drifts (see :func:`drifting_partitions`) unless
    ``partitions`` is given.  Returns the dataset and a :class:`SyntheticTruth`
    whose partitions are canonical with ``beta[t][c - 1]`` for cluster ``c``.
    """
    rng = np.random.default_rng(rng)
    if partitions is None:
        partitions = drifting_partitions(n_units, n_times, n_clusters, drift, rng)
    else:
        partitions = [tuple(int(v) for v in p) for p in partitions]
        n_times = len(partitions)
        if any(len(p) != n_units for p in partitions):
            raise DomainError("every partition must label all units")
    top = max(max(p) for p in partitions)
    if centers is None:
        centers = rng.normal(0.0, center_scale, size=(max(top, n_clusters), px))
    centers = np.asarray(centers, dtype=float).reshape(-1, px)
    if centers.shape[0] < top:
        raise DomainError(f"{centers.shape[0]} centers for {top} clusters")
    taus = np.broadcast_to(np.asarray(tau, dtype=float), (n_times,))
    gammas = rng.normal(0.0, gamma_scale, size=(n_times, pz))
    ys, xs, zs, units, times = [], [], [], [], []
    for t, part in enumerate(partitions):
        for i in range(n_units):
            x = np.column_stack([np.ones(obs_per_unit),
                                 rng.normal(size=(obs_per_unit, px - 1))])
            z = rng.normal(size=(obs_per_unit, pz))
            mean = x @ centers[part[i] - 1] + z @ gammas[t]
            ys.append(mean + rng.normal(size=obs_per_unit) / np.sqrt(taus[t]))
            xs.append(x[:, 1:])
            zs.append(z)
            units += [f"u{i + 1:03d}"] * obs_per_unit
            times += [t + 1] * obs_per_unit
    data = RegressionDataset.from_arrays(np.concatenate(ys), np.vstack(xs), np.vstack(zs),
                                         units, times)
    betas = [centers[[p[i] - 1 for i in _first_members(p)]] for p in partitions]
    return data, SyntheticTruth([canonicalize(p) for p in partitions], betas, gammas,
                                np.array(taus))


def _first_members(p) -> list:
    seen = {}
    for i, v in enumerate(p):
        seen.setdefault(v, i)
    return list(seen.values())
