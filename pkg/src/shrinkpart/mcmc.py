"""Posterior simulation for sequences of partitions under independent,
hierarchical (shared anchor), or temporal (previous partition as anchor)
priors, optionally coupled to the clustered regression likelihood.

Labels inside the chain are slot ids ``0..n-1``; they are canonicalized
after every sweep and stored 1-based in the archive.
"""

import time as _time
from dataclasses import asdict, dataclass, field, fields
from math import log
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
import yaml
from scipy.special import logsumexp

from . import __version__
from . import _kernels as K
from .baselines import (BaselineSpec, EwensPitman, FixedPartition, UniformPartition,
                        baseline_from_config, baseline_to_config, is_exchangeable)
from .bell import log_bell_table
from .exceptions import ConfigError, DomainError
from .partitions import canonicalize, parse_partition
from .regression import (RegressionDataset, RegressionPriors, pointwise_log_likelihood,
                         ClusterParams, update_all_beta, update_gamma, update_tau)
from .sp import baseline_kernel_args

PRIORS = ("sp", "cpp", "lsp", "fixed", "baseline")


@dataclass(frozen=True)
class Independent:
    """Each partition has its own prior.  ``anchor`` is needed by the
    anchored priors; ``shrinkage`` is the fixed CPP/LSP scale."""

    prior: str = "baseline"
    baseline: BaselineSpec = EwensPitman(1.0)
    anchor: tuple = None
    shrinkage: float = 1.0
    distance: str = "vi"

    def __post_init__(self):
        if self.prior not in PRIORS:
            raise ConfigError(f"unknown prior {self.prior!r}; choose from {PRIORS}")
        if self.prior in ("sp", "cpp", "lsp", "fixed") and self.anchor is None:
            raise ConfigError(f"prior {self.prior!r} needs an anchor partition")
        if self.anchor is not None:
            object.__setattr__(self, "anchor", canonicalize(self.anchor))
        if self.distance not in ("vi", "binder"):
            raise ConfigError(f"unknown distance {self.distance!r}")
        if not self.shrinkage >= 0:
            raise ConfigError("shrinkage must be nonnegative")


@dataclass(frozen=True)
class Hierarchical:
    """Every partition shrinks toward one unknown anchor."""

    anchor_prior: BaselineSpec = EwensPitman(1.0)
    baseline: BaselineSpec = EwensPitman(1.0)


@dataclass(frozen=True)
class Temporal:
    """Each partition shrinks toward the previous one; step t uses shrinkage
    divided by ``spacings[t - 1]``."""

    initial: BaselineSpec = EwensPitman(1.0)
    baseline: BaselineSpec = EwensPitman(1.0)
    spacings: tuple = None

    def __post_init__(self):
        if self.spacings is not None:
            object.__setattr__(self, "spacings", tuple(float(d) for d in self.spacings))
            if any(not d > 0 for d in self.spacings):
                raise ConfigError("temporal spacings must be positive")


DependenceKind = Union[Independent, Hierarchical, Temporal]


def kind_from_config(cfg: dict, n: int = None) -> DependenceKind:
    cfg = dict(cfg or {})
    name = str(cfg.pop("kind", "independent")).lower()

    def base(key, default=None):
        return baseline_from_config(cfg.get(key, default or {"family": "ewens", "concentration": 1.0}), n)

    if name == "independent":
        anchor = cfg.get("anchor")
        if isinstance(anchor, str):
            anchor = parse_partition(anchor)
        return Independent(str(cfg.get("prior", "baseline")), base("baseline"),
                           None if anchor is None else tuple(anchor),
                           float(cfg.get("shrinkage", 1.0)), str(cfg.get("distance", "vi")))
    if name == "hierarchical":
        return Hierarchical(base("anchor_prior"), base("baseline"))
    if name == "temporal":
        sp = cfg.get("spacings")
        return Temporal(base("initial"), base("baseline"), None if sp is None else tuple(sp))
    raise ConfigError(f"unknown model kind {name!r}")


def kind_to_config(kind: DependenceKind) -> dict:
    if isinstance(kind, Independent):
        out = {"kind": "independent", "prior": kind.prior,
               "baseline": baseline_to_config(kind.baseline), "shrinkage": kind.shrinkage,
               "distance": kind.distance}
        if kind.anchor is not None:
            out["anchor"] = ",".join(map(str, kind.anchor))
        return out
    if isinstance(kind, Hierarchical):
        return {"kind": "hierarchical", "anchor_prior": baseline_to_config(kind.anchor_prior),
                "baseline": baseline_to_config(kind.baseline)}
    out = {"kind": "temporal", "initial": baseline_to_config(kind.initial),
           "baseline": baseline_to_config(kind.baseline)}
    if kind.spacings is not None:
        out["spacings"] = list(kind.spacings)
    return out


@dataclass
class McmcConfig:
    iterations: int = 55000
    burn_in: int = 5000
    thin: int = 10
    perm_attempts: Optional[int] = None
    perm_block: Optional[int] = None
    shrinkage_shape: float = 5.0
    shrinkage_rate: float = 1.0
    grit_a: float = 1.0
    grit_b: float = 9.0
    shrinkage_step: float = 0.5
    grit_step: float = 0.5
    param_moves: int = 1
    init_shrinkage: Optional[float] = None
    init_grit: Optional[float] = None
    learn_shrinkage: bool = True
    learn_grit: bool = True
    shrinkage_weights: Optional[tuple] = None
    label_update: str = "collapsed"
    aux_draws: int = 3
    path_moves: bool = True
    seed: int = 0
    chains: int = 1

    def __post_init__(self):
        if self.iterations < 1 or not 0 <= self.burn_in < self.iterations:
            raise ConfigError("need iterations >= 1 and 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")
        for name in ("shrinkage_shape", "shrinkage_rate", "grit_a", "grit_b",
                     "shrinkage_step", "grit_step"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.label_update not in ("collapsed", "neal8"):
            raise ConfigError(f"label_update must be 'collapsed' or 'neal8'")
        if self.aux_draws < 1 or self.param_moves < 0 or self.chains < 1:
            raise ConfigError("aux_draws and chains must be >= 1, param_moves >= 0")
        if self.init_grit is not None and not 0 < self.init_grit < 1:
            raise ConfigError("initial grit must lie in (0, 1)")
        if self.init_shrinkage is not None and not self.init_shrinkage > 0:
            raise ConfigError("initial shrinkage must be positive")
        if self.shrinkage_weights is not None:
            self.shrinkage_weights = tuple(float(w) for w in self.shrinkage_weights)
            if any(not w >= 0 for w in self.shrinkage_weights):
                raise ConfigError("shrinkage weights must be nonnegative")

    @classmethod
    def from_config(cls, cfg: dict) -> "McmcConfig":
        cfg = dict(cfg or {})
        known = {f.name for f in fields(cls)}
        unknown = set(cfg) - known
        if unknown:
            raise ConfigError(f"unknown mcmc settings: {sorted(unknown)}")
        return cls(**cfg)

    def to_config(self) -> dict:
        out = asdict(self)
        if out["shrinkage_weights"] is not None:
            out["shrinkage_weights"] = list(out["shrinkage_weights"])
        return out

    def permutation_moves(self, kind: DependenceKind, n: int):
        """(attempts, block size); independent models default to 10 x 10,
        dependent ones to 200 x 5."""
        dependent = not isinstance(kind, Independent)
        attempts = self.perm_attempts if self.perm_attempts is not None else (200 if dependent else 10)
        block = self.perm_block if self.perm_block is not None else (5 if dependent else 10)
        return attempts, max(1, min(block, n))


@dataclass
class ChainState:
    labels: list
    perms: list
    omega: float
    psi: float
    anchor: Optional[np.ndarray] = None
    beta: list = field(default_factory=list)
    gamma: list = field(default_factory=list)
    tau: list = field(default_factory=list)
    iteration: int = 0


def _slot_canonical(labels: np.ndarray) -> np.ndarray:
    """Relabel slot ids to 0-based first-appearance order (in place)."""
    return np.asarray(canonicalize(labels), dtype=np.int64) - 1


class _Base:
    """Kernel arguments for one baseline."""

    def __init__(self, spec: BaselineSpec, n: int):
        self.spec = spec
        self.code, self.par, self.target, _ = baseline_kernel_args(spec, n)

    @property
    def args(self):
        return self.code, self.par, self.target


class Sampler:
    """One Markov chain.  ``data`` may be None for prior-only runs, in which
    case ``n_items`` and ``n_times`` size the state."""

    def __init__(self, kind: DependenceKind, config: McmcConfig, data: RegressionDataset = None,
                 priors: RegressionPriors = None, heldout: RegressionDataset = None,
                 n_items: int = None, n_times: int = None, rng=None):
        self.kind = kind
        self.config = config
        self.data = data
        if data is not None:
            n_items, n_times = data.n_units, data.n_times
            self.priors = priors or RegressionPriors.for_dims(data.px, data.pz)
            self.slices = [data.slice(t) for t in range(n_times)]
        else:
            if n_items is None or n_times is None:
                raise ConfigError("prior-only runs need n_items and n_times")
            self.priors = None
            self.slices = None
        self.held = None if heldout is None else [heldout.slice(t) for t in range(n_times)]
        self.n = int(n_items)
        self.T = int(n_times)
        if self.n < 1 or self.T < 0:
            raise ConfigError("need at least one item")
        self.rng = np.random.default_rng(rng)
        self.logbell = log_bell_table(self.n + 1)
        weights = config.shrinkage_weights
        if weights is None:
            weights = (1.0,) * self.n
        if len(weights) != self.n:
            raise ConfigError(f"{len(weights)} shrinkage weights for {self.n} items")
        self.weights = np.asarray(weights, dtype=float)
        self._setup_kind()
        self.state = self._initial_state()
        self.accepted = {"permutation": 0, "shrinkage": 0, "grit": 0, "anchor": 0}
        self.proposed = dict.fromkeys(self.accepted, 0)

    # ----- model structure -------------------------------------------------

    def _setup_kind(self):
        kind, n = self.kind, self.n
        if isinstance(kind, Independent):
            if kind.anchor is not None and len(kind.anchor) != n:
                raise ConfigError(f"anchor has {len(kind.anchor)} items, data has {n}")
            spec = FixedPartition(kind.anchor) if kind.prior == "fixed" else kind.baseline
            self.base = _Base(_sized(spec, n), n)
            self.fixed_anchor = (None if kind.anchor is None
                                 else np.asarray(kind.anchor, dtype=np.int64) - 1)
            self.uses_sp = kind.prior == "sp"
        elif isinstance(kind, Hierarchical):
            self.base = _Base(_sized(kind.baseline, n), n)
            self.anchor_base = _Base(_sized(kind.anchor_prior, n), n)
            self.uses_sp = True
        else:
            self.base = _Base(_sized(kind.baseline, n), n)
            self.initial_base = _Base(_sized(kind.initial, n), n)
            if kind.spacings is not None and len(kind.spacings) != max(self.T - 1, 0):
                raise ConfigError(f"{len(kind.spacings)} spacings for {self.T} time points")
            self.uses_sp = self.T > 1
        self.zero = np.zeros(n)
        self.natural = np.arange(n, dtype=np.int64)

    def _step_scale(self, t: int) -> float:
        spacings = self.kind.spacings
        return 1.0 if spacings is None else 1.0 / spacings[t - 1]

    def term(self, t: int, omega=None, psi=None, anchor=None, labels=None):
        """Kernel arguments (kind, anchor, omega, psi, scal, bcode, bpar,
        btarget) of the prior term for partition ``t`` given its parent."""
        st = self.state
        omega = st.omega if omega is None else omega
        psi = st.psi if psi is None else psi
        kind = self.kind
        if isinstance(kind, Independent):
            if kind.prior == "sp":
                return (K.K_SP, self.fixed_anchor, omega * self.weights, psi, 0.0) + self.base.args
            if kind.prior == "cpp":
                code = K.K_CPP_VI if kind.distance == "vi" else K.K_CPP_BINDER
                return (code, self.fixed_anchor, self.zero, 0.0, kind.shrinkage) + self.base.args
            if kind.prior == "lsp":
                return (K.K_LSP, self.fixed_anchor, self.zero, 0.0, kind.shrinkage) + self.base.args
            return (K.K_BASE, self.natural, self.zero, 0.0, 0.0) + self.base.args
        if isinstance(kind, Hierarchical):
            mu = st.anchor if anchor is None else anchor
            return (K.K_SP, mu, omega * self.weights, psi, 0.0) + self.base.args
        if t == 0:
            return (K.K_BASE, self.natural, self.zero, 0.0, 0.0) + self.initial_base.args
        parent = st.labels[t - 1] if labels is None else labels
        return (K.K_SP, parent, omega * self.weights * self._step_scale(t), psi, 0.0) + self.base.args

    def term_logp(self, t: int, labels=None, perm=None, **kw) -> float:
        st = self.state
        kind, anchor, omega, psi, scal, code, par, target = self.term(t, **kw)
        return K.prior_logp(kind, st.labels[t] if labels is None else labels,
                            st.perms[t] if perm is None else perm, anchor, omega, psi, scal,
                            code, par, target, self.logbell)

    def _sp_times(self):
        """Time points whose prior term depends on shrinkage, grit or anchor."""
        if not self.uses_sp:
            return []
        start = 1 if isinstance(self.kind, Temporal) else 0
        return list(range(start, self.T))

    def log_prior_partitions(self, omega=None, psi=None, anchor=None) -> float:
        return float(sum(self.term_logp(t, omega=omega, psi=psi, anchor=anchor)
                         for t in self._sp_times()))

    # ----- initialization --------------------------------------------------

    def _initial_state(self) -> ChainState:
        cfg, n, rng = self.config, self.n, self.rng
        omega = cfg.init_shrinkage or cfg.shrinkage_shape / cfg.shrinkage_rate
        psi = cfg.init_grit or cfg.grit_a / (cfg.grit_a + cfg.grit_b)
        if isinstance(self.base.spec, FixedPartition):
            start = [np.asarray(self.base.spec.target, dtype=np.int64) - 1 for _ in range(self.T)]
        else:
            start = [self._draw_base(self.base) for _ in range(self.T)]
        perms = [rng.permutation(n).astype(np.int64) for _ in range(self.T)]
        anchor = None
        if isinstance(self.kind, Hierarchical):
            anchor = self._draw_base(self.anchor_base)
        state = ChainState(start, perms, float(omega), float(psi), anchor)
        if self.data is not None:
            for t, sl in enumerate(self.slices):
                gamma = self.priors.gamma_mean.copy()
                tau = self.priors.tau_shape / self.priors.tau_rate
                labels = tuple(state.labels[t] + 1)
                beta = update_all_beta(sl, labels, gamma, tau, self.priors, rng)
                state.beta.append(beta)
                state.gamma.append(gamma)
                state.tau.append(tau)
        return state

    def _draw_base(self, base: _Base) -> np.ndarray:
        perm = self.rng.permutation(self.n).astype(np.int64)
        u = self.rng.random((1, self.n))
        draw = K.sp_sample_many(perm, self.natural, self.zero, 0.0, *base.args, self.logbell, u)
        return draw[0].astype(np.int64) - 1

    # ----- updates ---------------------------------------------------------

    def _unit_stats(self, t: int):
        sl = self.slices[t]
        gamma = self.state.gamma[t]
        xtr, rtr = sl.residual_stats(gamma)
        return sl.xtx, xtr, rtr, sl.counts, self.state.tau[t]

    def update_labels(self, t: int) -> None:
        if self.config.label_update == "neal8" and self.data is not None:
            self._neal8_sweep(t)
        else:
            self._collapsed_sweep(t)
        self.state.labels[t] = _slot_canonical(self.state.labels[t])
        if self.data is not None:
            self._update_regression(t)

    def _collapsed_sweep(self, t: int) -> None:
        st = self.state
        n = self.n
        left = self.term(t)
        has_right = isinstance(self.kind, Temporal) and t + 1 < self.T
        if has_right:
            right = self.term(t + 1)
            rlabels, rperm = st.labels[t + 1], st.perms[t + 1]
        else:
            right = (K.K_SP, self.natural, self.zero, 0.0, 0.0) + self.base.args
            rlabels, rperm = self.natural, self.natural
        if self.data is not None:
            xtx, xtr, rtr, counts, tau = self._unit_stats(t)
            pr = self.priors
            lik = (True, xtx, xtr, rtr, counts, float(tau), pr.beta_precision, pr.beta_lm,
                   pr.beta_mlm, pr.beta_logdet)
        else:
            lik = (False, np.zeros((n, 1, 1)), np.zeros((n, 1)), np.zeros(n), np.zeros(n), 1.0,
                   np.eye(1), np.zeros(1), 0.0, 0.0)
        K.label_sweep(st.labels[t], st.perms[t], left[0], left[1], left[2], left[3], left[4],
                      left[5], left[6], left[7], has_right, rlabels, rperm, right[2], right[3],
                      right[5], right[6], right[7], self.logbell, *lik, self.rng.random(n))

    def _neal8_sweep(self, t: int) -> None:
        """Label update with cluster coefficients kept and ``aux_draws``
        fresh prior draws standing in for a new cluster."""
        st, rng, pr = self.state, self.rng, self.priors
        n, m_aux = self.n, self.config.aux_draws
        labels = st.labels[t]
        xtx, xtr, rtr, counts, tau = self._unit_stats(t)
        coef = {int(c): st.beta[t][c] for c in np.unique(labels)}
        prior_cov_chol = np.linalg.cholesky(np.linalg.inv(pr.beta_precision))
        has_right = isinstance(self.kind, Temporal) and t + 1 < self.T

        def unit_ll(i, beta):
            return -0.5 * tau * (rtr[i] - 2.0 * beta @ xtr[i] + beta @ xtx[i] @ beta)

        def prior_of(lab):
            lp = self.term_logp(t, labels=lab)
            if has_right and lp > -np.inf:
                omega_r, psi_r = self.term(t + 1)[2:4]
                lp += K.sp_logpmf(st.labels[t + 1], st.perms[t + 1], lab, omega_r, psi_r,
                                  *self.base.args, self.logbell)
            return lp

        for i in range(n):
            old = int(labels[i])
            alone = np.sum(labels == old) == 1
            aux = [pr.beta_mean + prior_cov_chol @ rng.standard_normal(len(pr.beta_mean))
                   for _ in range(m_aux)]
            if alone:
                aux[0] = coef[old]
            occupied = sorted(set(int(c) for c in labels[np.arange(n) != i]))
            free = next(c for c in range(n) if c not in occupied)
            options, weights = [], []
            for c in occupied:
                lab = labels.copy()
                lab[i] = c
                lp = prior_of(lab)
                options.append((c, None))
                weights.append(lp + unit_ll(i, coef[c]) if lp > -np.inf else -np.inf)
            lab = labels.copy()
            lab[i] = free
            lp_new = prior_of(lab) - log(m_aux)
            for a in range(m_aux):
                options.append((free, aux[a]))
                weights.append(lp_new + unit_ll(i, aux[a]) if lp_new > -np.inf else -np.inf)
            w = np.asarray(weights)
            if np.all(np.isneginf(w)):
                continue
            probs = np.exp(w - logsumexp(w))
            pick = int(rng.choice(len(options), p=probs / probs.sum()))
            c, beta = options[pick]
            if alone and c != old:
                coef.pop(old)
            labels[i] = c
            if beta is not None:
                coef[c] = beta
        order = _first_appearance(labels)
        st.beta[t] = np.array([coef[c] for c in order])

    def _update_regression(self, t: int) -> None:
        st, sl, pr, rng = self.state, self.slices[t], self.priors, self.rng
        labels = tuple(st.labels[t] + 1)
        st.beta[t] = update_all_beta(sl, labels, st.gamma[t], st.tau[t], pr, rng)
        st.gamma[t] = update_gamma(sl, labels, st.beta[t], st.tau[t], pr, rng)
        st.tau[t] = update_tau(sl, labels, st.beta[t], st.gamma[t], pr, rng)

    def _perm_active(self, t: int) -> bool:
        kind = self.kind
        if isinstance(kind, Independent):
            if kind.prior in ("cpp", "fixed"):
                return False
            if kind.prior == "baseline":
                return not is_exchangeable(self.base.spec)
            return True
        if isinstance(kind, Temporal) and t == 0:
            return not is_exchangeable(self.initial_base.spec)
        return True

    def update_permutation(self, t: int) -> None:
        if not self._perm_active(t):
            return
        attempts, block = self.config.permutation_moves(self.kind, self.n)
        if attempts == 0 or self.n < 2:
            return
        rng = self.rng
        blocks = np.argsort(rng.random((attempts, self.n)), axis=1)[:, :block].astype(np.int64)
        shuffles = np.argsort(rng.random((attempts, block)), axis=1).astype(np.int64)
        log_u = np.log(rng.random(attempts))
        kind, anchor, omega, psi, scal, code, par, target = self.term(t)
        acc = K.permutation_mh(self.state.labels[t], self.state.perms[t], kind, anchor, omega,
                               psi, scal, code, par, target, self.logbell, blocks, shuffles, log_u)
        self.accepted["permutation"] += int(acc)
        self.proposed["permutation"] += attempts

    def update_shrinkage(self) -> None:
        """Random walk on log(omega) against its gamma prior."""
        st, cfg = self.state, self.config
        a, b = cfg.shrinkage_shape, cfg.shrinkage_rate

        def target(omega, logp):
            # log prior density of log(omega), i.e. gamma density times omega
            return a * log(omega) - b * omega + logp

        proposal = st.omega * np.exp(cfg.shrinkage_step * self.rng.standard_normal())
        current = target(st.omega, self.log_prior_partitions())
        cand = target(proposal, self.log_prior_partitions(omega=proposal))
        self.proposed["shrinkage"] += 1
        if log(self.rng.random()) < cand - current:
            st.omega = float(proposal)
            self.accepted["shrinkage"] += 1

    def update_grit(self) -> None:
        """Random walk on logit(psi) against its beta prior."""
        st, cfg = self.state, self.config

        def target(psi, logp):
            return cfg.grit_a * log(psi) + cfg.grit_b * log(1.0 - psi) + logp

        z = log(st.psi) - log(1.0 - st.psi) + cfg.grit_step * self.rng.standard_normal()
        proposal = 1.0 / (1.0 + np.exp(-z))
        if not 0.0 < proposal < 1.0:
            self.rng.random()
            return
        current = target(st.psi, self.log_prior_partitions())
        cand = target(proposal, self.log_prior_partitions(psi=proposal))
        self.proposed["grit"] += 1
        if log(self.rng.random()) < cand - current:
            st.psi = float(proposal)
            self.accepted["grit"] += 1

    def update_anchor(self) -> None:
        """Per-item Metropolis-within-Gibbs on the shared anchor, proposing
        from the anchor prior's full conditional for that item."""
        st, rng, n = self.state, self.rng, self.n
        mu = st.anchor
        ab = self.anchor_base
        for i in range(n):
            old = int(mu[i])
            others = set(int(c) for c in np.delete(mu, i))
            free = next(c for c in range(n) if c not in others)
            cands = sorted(others) + [free]
            logq = np.empty(len(cands))
            for r, c in enumerate(cands):
                mu[i] = c
                logq[r] = K.prior_logp(K.K_BASE, mu, self.natural, self.natural, self.zero, 0.0,
                                       0.0, *ab.args, self.logbell)
            mu[i] = old
            probs = np.exp(logq - logsumexp(logq))
            new = cands[int(rng.choice(len(cands), p=probs / probs.sum()))]
            u = rng.random()
            self.proposed["anchor"] += 1
            if new == old or (old not in others and new == free):
                self.accepted["anchor"] += 1
                continue
            current = self.log_prior_partitions()
            mu[i] = new
            cand = self.log_prior_partitions()
            if log(u) < cand - current:
                self.accepted["anchor"] += 1
            else:
                mu[i] = old
        st.anchor = _slot_canonical(mu)

    def update_paths(self) -> None:
        """Redraw each item's labels at all time points at once (temporal
        models); single-site sweeps alone mix poorly under strong coupling."""
        st, n, T = self.state, self.n, self.T
        omegas = np.array([st.omega * self.weights * (self._step_scale(t) if t else 0.0)
                           for t in range(T)])
        if self.data is not None:
            stats = [self._unit_stats(t) for t in range(T)]
            pr = self.priors
            lik = (True, np.stack([s[0] for s in stats]), np.stack([s[1] for s in stats]),
                   np.stack([s[2] for s in stats]), np.stack([s[3] for s in stats]).astype(float),
                   np.array([s[4] for s in stats], dtype=float), pr.beta_precision, pr.beta_lm,
                   pr.beta_mlm, pr.beta_logdet)
        else:
            lik = (False, np.zeros((T, n, 1, 1)), np.zeros((T, n, 1)), np.zeros((T, n)),
                   np.zeros((T, n)), np.ones(T), np.eye(1), np.zeros(1), 0.0, 0.0)
        labels = np.array(st.labels)
        K.path_update(labels, np.array(st.perms), omegas, st.psi, *self.base.args,
                      *self.initial_base.args, self.logbell, *lik, self.rng.random((n, T)))
        for t in range(T):
            st.labels[t] = _slot_canonical(labels[t])
            if self.data is not None:
                st.beta[t] = update_all_beta(self.slices[t], tuple(st.labels[t] + 1),
                                             st.gamma[t], st.tau[t], self.priors, self.rng)

    def step(self) -> None:
        if isinstance(self.kind, Temporal) and self.T > 1 and self.config.path_moves:
            self.update_paths()
        for t in range(self.T):
            self.update_labels(t)
        for t in range(self.T):
            self.update_permutation(t)
        if self.uses_sp:
            for _ in range(self.config.param_moves):
                if self.config.learn_shrinkage:
                    self.update_shrinkage()
                if self.config.learn_grit:
                    self.update_grit()
        if isinstance(self.kind, Hierarchical):
            self.update_anchor()
        self.state.iteration += 1

    def heldout_log_likelihood(self) -> float:
        if self.held is None or self.data is None:
            return float("nan")
        st = self.state
        total = 0.0
        for t, sl in enumerate(self.held):
            if sl.m == 0:
                continue
            params = ClusterParams(tuple(st.labels[t] + 1), st.beta[t], st.gamma[t], st.tau[t])
            total += float(pointwise_log_likelihood(sl, params).sum())
        return total

    def run(self, progress=None) -> "SampleArchive":
        cfg = self.config
        keep = [it for it in range(cfg.burn_in, cfg.iterations) if (it - cfg.burn_in) % cfg.thin == 0]
        D = len(keep)
        parts = np.zeros((D, self.T, self.n), dtype=np.int64)
        anchors = np.zeros((D, self.n), dtype=np.int64) if isinstance(self.kind, Hierarchical) else None
        omega = np.zeros(D)
        psi = np.zeros(D)
        tau = np.zeros((D, self.T))
        held = np.full(D, np.nan)
        start = _time.process_time()
        d = 0
        for it in range(cfg.iterations):
            self.step()
            if d < D and it == keep[d]:
                st = self.state
                for t in range(self.T):
                    parts[d, t] = st.labels[t] + 1
                if anchors is not None:
                    anchors[d] = st.anchor + 1
                omega[d], psi[d] = st.omega, st.psi
                if self.data is not None:
                    tau[d] = st.tau
                held[d] = self.heldout_log_likelihood()
                d += 1
            if progress is not None:
                progress(it)
        rates = {k: (self.accepted[k] / self.proposed[k]) if self.proposed[k] else None
                 for k in self.accepted}
        return SampleArchive(parts, omega, psi, tau, held, anchors, kind_to_config(self.kind),
                             self.config.to_config(), rates, _time.process_time() - start)


def _first_appearance(labels) -> list:
    seen = []
    for v in labels:
        if int(v) not in seen:
            seen.append(int(v))
    return seen


def _sized(spec: BaselineSpec, n: int) -> BaselineSpec:
    if isinstance(spec, UniformPartition) and spec.n != n:
        return UniformPartition(n)
    if isinstance(spec, FixedPartition) and len(spec.target) != n:
        raise ConfigError(f"fixed target has {len(spec.target)} items, data has {n}")
    return spec


@dataclass
class SampleArchive:
    """Post-burn-in thinned draws.  ``partitions[d, t]`` is canonical and
    1-based; ``heldout[d]`` is the held-out log-likelihood of draw ``d``."""

    partitions: np.ndarray
    omega: np.ndarray
    psi: np.ndarray
    tau: np.ndarray
    heldout: np.ndarray
    anchor: Optional[np.ndarray]
    kind: dict
    config: dict
    acceptance: dict = field(default_factory=dict)
    cpu_seconds: float = 0.0
    seed: object = None

    @property
    def draws(self) -> int:
        return self.partitions.shape[0]

    def write(self, out) -> Path:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        D, T, _ = self.partitions.shape
        rows = [(d, t + 1, ",".join(map(str, self.partitions[d, t])))
                for d in range(D) for t in range(T)]
        pd.DataFrame(rows, columns=["draw", "t", "labels"]).to_csv(out / "partitions.csv", index=False)
        scal = {"draw": np.arange(D), "omega": self.omega, "psi": self.psi,
                "heldout": self.heldout}
        for t in range(T):
            scal[f"tau_{t + 1}"] = self.tau[:, t]
        pd.DataFrame(scal).to_csv(out / "scalars.csv", index=False, float_format="%.17g")
        if self.anchor is not None:
            pd.DataFrame({"draw": np.arange(D),
                          "labels": [",".join(map(str, a)) for a in self.anchor]}).to_csv(
                out / "anchor.csv", index=False)
        manifest = {"version": __version__, "kind": self.kind, "mcmc": self.config,
                    "seed": self.seed, "draws": int(D), "n_times": int(T),
                    "n_items": int(self.partitions.shape[2]),
                    "acceptance": self.acceptance, "cpu_seconds": float(self.cpu_seconds)}
        with open(out / "manifest.yaml", "w") as fh:
            yaml.safe_dump(manifest, fh, sort_keys=False)
        return out

    @classmethod
    def read(cls, path) -> "SampleArchive":
        path = Path(path)
        try:
            with open(path / "manifest.yaml") as fh:
                man = yaml.safe_load(fh)
            parts = pd.read_csv(path / "partitions.csv")
            scal = pd.read_csv(path / "scalars.csv", float_precision="round_trip")
        except (OSError, yaml.YAMLError, pd.errors.ParserError) as exc:
            raise ConfigError(f"cannot read archive {path}: {exc}") from exc
        D, T, n = man["draws"], man["n_times"], man["n_items"]
        arr = np.zeros((D, T, n), dtype=np.int64)
        for d, t, lab in parts.itertuples(index=False):
            arr[d, t - 1] = parse_partition(lab)
        tau = scal[[f"tau_{t + 1}" for t in range(T)]].to_numpy() if T else np.zeros((D, 0))
        anchor = None
        if (path / "anchor.csv").exists():
            anchor = np.array([parse_partition(s) for s in pd.read_csv(path / "anchor.csv")["labels"]])
        return cls(arr, scal["omega"].to_numpy(), scal["psi"].to_numpy(), tau,
                   scal["heldout"].to_numpy(), anchor, man["kind"], man["mcmc"],
                   man.get("acceptance", {}), man.get("cpu_seconds", 0.0), man.get("seed"))


def combine(archives) -> SampleArchive:
    """Pool draws from several chains of the same model."""
    first = archives[0]
    cat = np.concatenate
    anchor = None if first.anchor is None else cat([a.anchor for a in archives])
    return SampleArchive(cat([a.partitions for a in archives]), cat([a.omega for a in archives]),
                         cat([a.psi for a in archives]), cat([a.tau for a in archives]),
                         cat([a.heldout for a in archives]), anchor, first.kind, first.config,
                         first.acceptance, sum(a.cpu_seconds for a in archives),
                         [a.seed for a in archives])


def run_chain(kind: DependenceKind, config: McmcConfig, data: RegressionDataset = None,
              priors: RegressionPriors = None, heldout: RegressionDataset = None,
              n_items: int = None, n_times: int = None, seed=None) -> SampleArchive:
    """Run one chain; ``seed`` (int or SeedSequence) defaults to ``config.seed``."""
    seed = config.seed if seed is None else seed
    sampler = Sampler(kind, config, data, priors, heldout, n_items, n_times,
                      np.random.default_rng(seed))
    archive = sampler.run()
    archive.seed = seed if isinstance(seed, int) else str(seed.entropy)
    return archive


def run_chains(kind: DependenceKind, config: McmcConfig, data: RegressionDataset = None,
               priors: RegressionPriors = None, heldout: RegressionDataset = None,
               n_items: int = None, n_times: int = None) -> list:
    """``config.chains`` independent chains with streams spawned from ``config.seed``."""
    seqs = np.random.SeedSequence(config.seed).spawn(config.chains)
    out = []
    for c, seq in enumerate(seqs):
        arch = run_chain(kind, config, data, priors, heldout, n_items, n_times, seed=seq)
        arch.seed = f"{config.seed}/{c}"
        out.append(arch)
    return out
