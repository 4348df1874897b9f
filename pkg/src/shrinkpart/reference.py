"""Anchored comparison distributions: centered partition process (CPP) and
the permutation-extended location-scale partition (LSP) distribution."""

import functools
from dataclasses import dataclass
from math import log
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from . import _kernels as K
from .baselines import AllocationState, BaselineSpec
from .exceptions import CapacityError, DomainError
from .partitions import (Partition, binder_distance, canonicalize, check_permutation,
                         enumerate_partitions, is_canonical, vi_distance)
from .sp import EXACT_MARGINAL_MAX_N, all_permutations, baseline_kernel_args

CPP_MAX_N = 10
DISTANCES = {"binder": binder_distance, "vi": vi_distance}


@dataclass(frozen=True)
class CppParams:
    anchor: Partition
    shrinkage: float
    distance: str = "vi"
    baseline: BaselineSpec = None

    def __post_init__(self):
        if not is_canonical(self.anchor):
            object.__setattr__(self, "anchor", canonicalize(self.anchor))
        if not self.shrinkage >= 0:
            raise DomainError(f"CPP shrinkage must be nonnegative, got {self.shrinkage}")
        if self.distance not in DISTANCES:
            raise DomainError(f"unknown distance {self.distance!r}")
        if self.baseline is None:
            raise DomainError("CPP needs a baseline distribution")


@dataclass(frozen=True)
class LspParams:
    anchor: Partition
    shrinkage: float

    def __post_init__(self):
        if not is_canonical(self.anchor):
            object.__setattr__(self, "anchor", canonicalize(self.anchor))
        if not self.shrinkage >= 0:
            raise DomainError(f"LSP shrinkage must be nonnegative, got {self.shrinkage}")


def _cpp_unnormalized(params: CppParams, parts: np.ndarray) -> np.ndarray:
    n = parts.shape[1]
    code, par, target, logbell = baseline_kernel_args(params.baseline, n)
    natural = np.arange(n, dtype=np.int64)[None, :]
    zero = np.zeros(n)
    anchor = np.asarray(params.anchor, dtype=np.int64)
    base = K.sp_logpmf_table(parts, natural, anchor, zero, 0.0, code, par, target, logbell)[:, 0]
    dist = K.binder if params.distance == "binder" else K.vi
    penalty = np.array([dist(row, anchor) for row in parts])
    with np.errstate(invalid="ignore"):
        return np.where(np.isfinite(base), base - params.shrinkage * penalty, -np.inf)


@functools.lru_cache(maxsize=32)
def _cpp_log_normalizer(params: CppParams) -> float:
    parts = np.array(enumerate_partitions(len(params.anchor)), dtype=np.int64)
    return float(logsumexp(_cpp_unnormalized(params, parts)))


def cpp_log_pmf(params: CppParams, p: Sequence[int]) -> float:
    """Normalized CPP log pmf; the normalizer is an exact sum over all partitions."""
    n = len(params.anchor)
    if len(p) != n:
        raise DomainError(f"partition has {len(p)} items, anchor has {n}")
    if n > CPP_MAX_N:
        raise CapacityError(f"CPP normalization needs enumeration; capped at n={CPP_MAX_N}")
    row = np.asarray(canonicalize(p), dtype=np.int64)[None, :]
    return float(_cpp_unnormalized(params, row)[0] - _cpp_log_normalizer(params))


def lsp_log_weights(params: LspParams, state: AllocationState, item: int) -> np.ndarray:
    """Normalized log allocation probabilities over candidates ``1..q+1``."""
    k = state.step
    q = state.num_clusters
    if k == 1:
        return np.zeros(1)
    omega = params.shrinkage
    anchor = params.anchor
    mine = anchor[item]
    prior = [anchor[j] for j in state.order]
    n_anchor = len(set(prior))
    same = np.zeros(q + 1)
    for j in state.order:
        if anchor[j] == mine:
            same[state.labels[j] - 1] += 1
    sizes = np.asarray(state.sizes, dtype=float)
    logw = np.empty(q + 1)
    logw[:q] = np.log1p(omega * same[:q]) - np.log(1.0 + n_anchor + omega * sizes)
    fresh = 0.0 if mine in prior else 1.0
    logw[q] = log(1.0 + omega * fresh) - log(1.0 + n_anchor + omega)
    return logw - logsumexp(logw)


def lsp_capf(params: LspParams, state: AllocationState, k: int, item: int,
             candidate: int) -> float:
    if k != state.step:
        raise DomainError(f"state is at step {state.step}, not {k}")
    if not 1 <= candidate <= state.num_clusters + 1:
        raise DomainError(f"candidate {candidate} not in 1..{state.num_clusters + 1}")
    return float(np.exp(lsp_log_weights(params, state, item)[candidate - 1]))


def lsp_log_pmf(params: LspParams, p: Sequence[int], perm: Sequence[int] = None) -> float:
    n = len(params.anchor)
    if len(p) != n:
        raise DomainError(f"partition has {len(p)} items, anchor has {n}")
    perm = tuple(range(n)) if perm is None else check_permutation(perm, n)
    state = AllocationState(n)
    relabel: dict = {}
    total = 0.0
    for item in perm:
        cand = relabel.get(p[item], state.num_clusters + 1)
        if state.step > 1:
            total += lsp_log_weights(params, state, item)[cand - 1]
        relabel.setdefault(p[item], cand)
        state.allocate(item, cand)
    return float(total)


def lsp_marginal_log_pmf(params: LspParams, p: Sequence[int], mode: str = "exact",
                         draws: int = 10000, seed=None) -> float:
    n = len(params.anchor)
    if len(p) != n:
        raise DomainError(f"partition has {len(p)} items, anchor has {n}")
    if mode == "exact":
        if n > EXACT_MARGINAL_MAX_N:
            raise CapacityError(f"exact marginal capped at n={EXACT_MARGINAL_MAX_N}")
        perms = all_permutations(n)
    elif mode == "monte_carlo":
        rng = np.random.default_rng(seed)
        perms = np.argsort(rng.random((draws, n)), axis=1).astype(np.int64)
    else:
        raise DomainError(f"unknown marginalization mode {mode!r}")
    row = np.asarray(p, dtype=np.int64)[None, :]
    anchor = np.asarray(params.anchor, dtype=np.int64)
    table = K.lsp_logpmf_table(row, perms, anchor, float(params.shrinkage))[0]
    return float(logsumexp(table) - log(len(table)))
