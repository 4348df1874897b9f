"""Shrinkage partition (SP) distribution.

Items are allocated along a permutation.  At each step the baseline CAPF is
reweighted by an anchor factor that rewards joining clusters holding
shrinkage mass from the same anchor cluster and penalizes (by the grit
``psi``) the total shrinkage mass already in the cluster.
"""

from dataclasses import dataclass
from itertools import permutations
from math import log
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from . import _kernels as K
from .baselines import (AllocationState, BaselineSpec, EwensPitman, FixedPartition,
                        JensenLiu, UniformPartition, baseline_log_weights)
from .bell import log_bell_table
from .exceptions import CapacityError, DomainError
from .partitions import Partition, canonicalize, check_permutation, is_canonical

EXACT_MARGINAL_MAX_N = 8


@dataclass(frozen=True)
class SpParams:
    anchor: Partition
    shrinkage: tuple
    grit: float
    baseline: BaselineSpec

    def __post_init__(self):
        if not is_canonical(self.anchor):
            object.__setattr__(self, "anchor", canonicalize(self.anchor))
        shrink = tuple(float(w) for w in np.broadcast_to(
            np.asarray(self.shrinkage, dtype=float), (len(self.anchor),)))
        if any(not w >= 0 for w in shrink):
            raise DomainError(f"shrinkage must be nonnegative, got {shrink}")
        object.__setattr__(self, "shrinkage", shrink)
        if not np.isfinite(self.grit):
            raise DomainError(f"grit must be finite, got {self.grit}")
        if isinstance(self.baseline, UniformPartition) and self.baseline.n != self.n:
            raise DomainError("uniform baseline size differs from anchor size")
        if isinstance(self.baseline, FixedPartition) and len(self.baseline.target) != self.n:
            raise DomainError("fixed baseline size differs from anchor size")

    @property
    def n(self) -> int:
        return len(self.anchor)

    @classmethod
    def common(cls, anchor, omega: float, grit: float, baseline: BaselineSpec):
        """Same shrinkage ``omega`` for every item."""
        return cls(tuple(anchor), (float(omega),) * len(anchor), grit, baseline)

    def with_shrinkage(self, shrinkage) -> "SpParams":
        return SpParams(self.anchor, shrinkage, self.grit, self.baseline)

    def with_anchor(self, anchor) -> "SpParams":
        return SpParams(tuple(anchor), self.shrinkage, self.grit, self.baseline)


class AnchorSums:
    """Shrinkage mass per (realized cluster, anchor cluster) so far.

    ``S[c, m]`` sums the shrinkage of allocated items in realized cluster
    ``c`` whose anchor label is ``m``; ``T[c]`` is the row total.  Both are
    indexed by 1-based labels.
    """

    def __init__(self, n: int):
        self.S = np.zeros((n + 2, n + 2))
        self.T = np.zeros(n + 2)

    def add(self, cluster: int, anchor_label: int, weight: float) -> None:
        self.S[cluster, anchor_label] += weight
        self.T[cluster] += weight


def anchor_log_factor(params: SpParams, sums: AnchorSums, k: int, item: int,
                      candidate: int) -> float:
    """Log of the unnormalized anchor factor for putting ``item`` in ``candidate``
    at 1-based step ``k``."""
    if k < 2:
        raise DomainError("the anchor factor is undefined at the first allocation")
    w = params.shrinkage[item]
    if w == 0.0:
        return 0.0
    s = sums.S[candidate, params.anchor[item]]
    t = sums.T[candidate]
    return w / (k - 1) ** 2 * (s * s - params.grit * t * t)


def sp_log_weights(params: SpParams, sums: AnchorSums, state: AllocationState,
                   item: int) -> np.ndarray:
    """Normalized log CAPF over candidates ``1..q+1`` for allocating ``item``."""
    k = state.step
    if k == 1:
        return np.zeros(1)
    logw = baseline_log_weights(params.baseline, state, item).copy()
    for c in range(1, state.num_clusters + 1):
        logw[c - 1] += anchor_log_factor(params, sums, k, item, c)
    return logw - logsumexp(logw)


def sp_capf(params: SpParams, sums: AnchorSums, state: AllocationState, k: int,
            candidate: int, item: int) -> float:
    if k != state.step:
        raise DomainError(f"state is at step {state.step}, not {k}")
    if not 1 <= candidate <= state.num_clusters + 1:
        raise DomainError(f"candidate {candidate} not in 1..{state.num_clusters + 1}")
    return float(np.exp(sp_log_weights(params, sums, state, item)[candidate - 1]))


def _walk(params: SpParams, p: Sequence[int], perm):
    n = params.n
    if len(p) != n:
        raise DomainError(f"partition has {len(p)} items, parameters have {n}")
    perm = tuple(range(n)) if perm is None else check_permutation(perm, n)
    state = AllocationState(n)
    sums = AnchorSums(n)
    relabel: dict = {}
    for item in perm:
        cand = relabel.get(p[item], state.num_clusters + 1)
        yield state, sums, item, cand
        relabel.setdefault(p[item], cand)
        state.allocate(item, cand)
        sums.add(cand, params.anchor[item], params.shrinkage[item])


def sp_log_pmf(params: SpParams, p: Sequence[int], perm: Sequence[int] = None) -> float:
    """Log pmf of ``p`` given the allocation order ``perm`` (natural if omitted)."""
    total = 0.0
    for state, sums, item, cand in _walk(params, p, perm):
        if state.step > 1:
            total += sp_log_weights(params, sums, state, item)[cand - 1]
    return float(total)


def kernel_args(params: SpParams):
    """Arrays consumed by the compiled kernels."""
    n = params.n
    anchor = np.asarray(params.anchor, dtype=np.int64)
    omega = np.asarray(params.shrinkage, dtype=float)
    return (anchor, omega, float(params.grit)) + baseline_kernel_args(params.baseline, n)


def baseline_kernel_args(spec: BaselineSpec, n: int):
    par = np.zeros(2)
    target = np.zeros(n, dtype=np.int64)
    logbell = np.zeros((1, 1))
    if isinstance(spec, EwensPitman):
        code = K.EP
        par[:] = spec.concentration, spec.discount
    elif isinstance(spec, JensenLiu):
        code = K.JL
        par[0] = spec.mass
    elif isinstance(spec, UniformPartition):
        code = K.UP
        logbell = log_bell_table(n + 1)
    else:
        code = K.FIXED
        target = np.asarray(spec.target, dtype=np.int64)
    return code, par, target, logbell


def all_permutations(n: int) -> np.ndarray:
    return np.array(list(permutations(range(n))), dtype=np.int64).reshape(-1, n)


def sp_marginal_log_pmf(params: SpParams, p: Sequence[int], mode: str = "exact",
                        draws: int = 10000, seed=None) -> float:
    """Log pmf with the permutation integrated out under a uniform prior.

    ``mode="exact"`` averages over all n! orders (n <= 8); ``"monte_carlo"``
    averages over ``draws`` uniformly drawn orders.
    """
    n = params.n
    labels = np.asarray(p, dtype=np.int64)
    if len(labels) != n:
        raise DomainError(f"partition has {len(labels)} items, parameters have {n}")
    if mode == "exact":
        if n > EXACT_MARGINAL_MAX_N:
            raise CapacityError(f"exact marginal capped at n={EXACT_MARGINAL_MAX_N}")
        perms = all_permutations(n)
    elif mode == "monte_carlo":
        rng = np.random.default_rng(seed)
        perms = np.argsort(rng.random((draws, n)), axis=1).astype(np.int64)
    else:
        raise DomainError(f"unknown marginalization mode {mode!r}")
    table = K.sp_logpmf_table(labels[None, :], perms, *kernel_args(params))[0]
    return float(logsumexp(table) - log(len(table)))


def sp_sample(params: SpParams, perm: Sequence[int] = None, rng=None) -> Partition:
    """Draw one partition by sequential allocation along ``perm``."""
    rng = np.random.default_rng(rng)
    n = params.n
    perm = tuple(range(n)) if perm is None else check_permutation(perm, n)
    state = AllocationState(n)
    sums = AnchorSums(n)
    for item in perm:
        logw = sp_log_weights(params, sums, state, item)
        cand = int(rng.choice(len(logw), p=np.exp(logw - logsumexp(logw)))) + 1
        state.allocate(item, cand)
        sums.add(cand, params.anchor[item], params.shrinkage[item])
    return canonicalize(state.labels)


def sp_sample_many(params: SpParams, size: int, perm: Sequence[int] = None,
                   rng=None) -> np.ndarray:
    """``size`` independent draws as a (size, n) array of canonical labels."""
    rng = np.random.default_rng(rng)
    n = params.n
    perm = tuple(range(n)) if perm is None else check_permutation(perm, n)
    uniforms = rng.random((size, n))
    return K.sp_sample_many(np.asarray(perm, dtype=np.int64), *kernel_args(params), uniforms)
