"""Brute-force enumeration oracle and small-n checks of the SP distribution's
limit, monotonicity, divergence, zero-shrinkage, and limiting-partition
properties."""

from dataclasses import dataclass, field
from math import log
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from . import _kernels as K
from .baselines import (BaselineSpec, Ewens, EwensPitman, JensenLiu, UniformPartition,
                        baseline_log_pmf, is_exchangeable)
from .bell import extended_bell
from .exceptions import CapacityError, DomainError
from .partitions import Partition, canonicalize, enumerate_partitions
from .sp import SpParams, all_permutations, kernel_args

FIXED_PERM_MAX_N = 8
MARGINAL_MAX_N = 6


@dataclass
class TheoremReport:
    """Outcome of one check.  ``margin`` is the slack on the pass condition:
    positive (or zero for exact-equality checks) when it holds."""

    theorem: str
    grid: str
    passed: bool
    margin: float
    diagnostics: list = field(default_factory=list)

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        lines = [f"[{status}] theorem {self.theorem}: {self.grid} (margin {self.margin:.6g})"]
        lines += [f"    {d}" for d in self.diagnostics]
        return "\n".join(lines)


def _tup(row) -> tuple:
    return tuple(int(v) for v in row)


def _partition_array(n: int) -> np.ndarray:
    return np.array(enumerate_partitions(n), dtype=np.int64)


def exact_log_table(params: SpParams, perm="marginal"):
    """All partitions of n with their log probabilities.

    ``perm`` is ``"marginal"`` (uniform average over all orders, n <= 6), a
    permutation, or ``None`` for the natural order (n <= 8).
    """
    n = params.n
    if perm == "marginal":
        if n > MARGINAL_MAX_N:
            raise CapacityError(f"exact marginal distribution capped at n={MARGINAL_MAX_N}")
        perms = all_permutations(n)
    else:
        if n > FIXED_PERM_MAX_N:
            raise CapacityError(f"exact distribution capped at n={FIXED_PERM_MAX_N}")
        order = range(n) if perm is None else perm
        perms = np.asarray(list(order), dtype=np.int64)[None, :]
    parts = _partition_array(n)
    table = K.sp_logpmf_table(parts, perms, *kernel_args(params))
    return parts, logsumexp(table, axis=1) - log(len(perms))


def exact_distribution(params: SpParams, perm="marginal") -> dict:
    parts, logp = exact_log_table(params, perm)
    return {tuple(int(v) for v in row): float(np.exp(lp)) for row, lp in zip(parts, logp)}


def _anchor_index(parts: np.ndarray, target: Sequence[int]) -> int:
    hit = np.flatnonzero((parts == np.asarray(canonicalize(target))).all(axis=1))
    return int(hit[0])


def log_mass(params: SpParams, target: Sequence[int]) -> float:
    parts, logp = exact_log_table(params)
    return float(logp[_anchor_index(parts, target)])


def log_complement(params: SpParams, target: Sequence[int]) -> float:
    """log(1 - Pr(target)) summed directly over the other partitions, so it stays
    accurate when Pr(target) rounds to 1."""
    parts, logp = exact_log_table(params)
    keep = np.ones(len(parts), dtype=bool)
    keep[_anchor_index(parts, target)] = False
    return float(logsumexp(logp[keep]))


def baseline_marginal_log_pmf(baseline: BaselineSpec, p) -> float:
    """Baseline log pmf averaged over all allocation orders."""
    n = len(p)
    if is_exchangeable(baseline):
        return baseline_log_pmf(baseline, p)
    vals = [baseline_log_pmf(baseline, p, tuple(perm)) for perm in all_permutations(n)]
    return float(logsumexp(vals) - log(len(vals)))


def _common(anchor, omega, psi, baseline) -> SpParams:
    return SpParams.common(anchor, omega, psi, baseline)


def verify_zero_limit(anchor, baseline: BaselineSpec, psis=(-0.5, 0.3, 2.0),
                      tol: float = 1e-12) -> TheoremReport:
    """Zero shrinkage reproduces the baseline for every partition and order."""
    n = len(anchor)
    parts = _partition_array(n)
    perms = all_permutations(n)
    worst = 0.0
    diags = []
    for psi in psis:
        params = SpParams(anchor, (0.0,) * n, psi, baseline)
        table = K.sp_logpmf_table(parts, perms, *kernel_args(params))
        for a, row in enumerate(parts):
            for b, perm in enumerate(perms):
                ref = baseline_log_pmf(baseline, tuple(row), tuple(perm))
                got = table[a, b]
                if ref == got:
                    continue
                gap = abs(ref - got) if np.isfinite(ref) and np.isfinite(got) else np.inf
                worst = max(worst, gap)
                if gap > tol and len(diags) < 3:
                    diags.append(f"psi={psi} p={_tup(row)} perm={_tup(perm)} gap={gap:.3g}")
    return TheoremReport("1a", f"n={n} anchor={tuple(anchor)} {baseline} psi={list(psis)}",
                         worst <= tol, tol - worst, diags)


def verify_limits(anchor, baseline: BaselineSpec, anchor_psis=(0.1, 0.5, 0.9),
                  one_cluster_psis=(-0.5, -2.0), singleton_psis=(1.5, 3.0),
                  omega_max: float = 1e3, eps: float = 1e-3) -> list[TheoremReport]:
    """Large common shrinkage concentrates the marginal on the anchor (grit in
    (0, 1)), on one cluster (grit < 0), or on all singletons (grit > 1)."""
    n = len(anchor)
    reports = [verify_zero_limit(anchor, baseline)]
    targets = {"1b": (anchor_psis, tuple(anchor)),
               "1c": (one_cluster_psis, (1,) * n),
               "1d": (singleton_psis, tuple(range(1, n + 1)))}
    for tid, (psis, target) in targets.items():
        margin = np.inf
        diags = []
        for psi in psis:
            mass = float(np.exp(log_mass(_common(anchor, omega_max, psi, baseline), target)))
            gap = mass - (1.0 - eps)
            margin = min(margin, gap)
            if gap <= 0:
                diags.append(f"psi={psi}: Pr({target})={mass:.6g} <= {1 - eps}")
        reports.append(TheoremReport(
            tid, f"n={n} anchor={tuple(anchor)} {baseline} psi={list(psis)} "
                 f"omega={omega_max:g} eps={eps:g}", margin > 0, margin, diags))
    return reports


def anchor_curve(anchor, baseline: BaselineSpec, psi: float, omega_grid):
    """(log Pr(anchor), log(1 - Pr(anchor))) along a common-shrinkage grid."""
    logm = []
    logc = []
    for omega in omega_grid:
        params = _common(anchor, omega, psi, baseline)
        parts, logp = exact_log_table(params)
        idx = _anchor_index(parts, anchor)
        logm.append(float(logp[idx]))
        logc.append(float(logsumexp(np.delete(logp, idx))))
    return np.array(logm), np.array(logc)


def verify_monotonicity(anchor, baseline: BaselineSpec, psi: float,
                        omega_grid) -> TheoremReport:
    """Pr(anchor) strictly increases along the grid.  The margin is the smallest
    increment, measured as the drop in the complementary mass."""
    if not 0 < psi < 1:
        raise DomainError(f"monotonicity holds for grit in (0, 1), got {psi}")
    grid = np.asarray(omega_grid, dtype=float)
    logm, logc = anchor_curve(anchor, baseline, psi, grid)
    steps = np.exp(logc[:-1]) - np.exp(logc[1:])
    diags = [f"omega {grid[i]:g} -> {grid[i + 1]:g}: increment {steps[i]:.3g}"
             for i in np.flatnonzero(steps <= 0)]
    base = baseline_marginal_log_pmf(baseline, anchor) if grid[0] == 0 else None
    ok = bool(np.all(steps > 0))
    if base is not None and abs(logm[0] - base) > 1e-12:
        ok = False
        diags.append(f"omega=0 mass {np.exp(logm[0])} != baseline {np.exp(base)}")
    return TheoremReport("2", f"n={len(anchor)} anchor={tuple(anchor)} {baseline} psi={psi} "
                              f"omega={grid[0]:g}..{grid[-1]:g} ({len(grid)} pts)",
                         ok, float(steps.min()), diags)


def verify_divergences(anchor, baseline: BaselineSpec, psi: float,
                       omega_grid) -> TheoremReport:
    """KL(point mass at anchor || SP) = -log Pr(anchor) and TV = 1 - Pr(anchor)
    both strictly decrease along the grid."""
    grid = np.asarray(omega_grid, dtype=float)
    logm, logc = anchor_curve(anchor, baseline, psi, grid)
    tv = np.exp(logc)
    kl = -np.log1p(-tv)
    d_tv = tv[:-1] - tv[1:]
    d_kl = kl[:-1] - kl[1:]
    diags = []
    ok = bool(np.all(d_tv > 0) and np.all(d_kl > 0) and np.all((tv >= 0) & (tv <= 1)))
    for i in np.flatnonzero((d_tv <= 0) | (d_kl <= 0)):
        diags.append(f"omega {grid[i]:g} -> {grid[i + 1]:g}: dTV={d_tv[i]:.3g} dKL={d_kl[i]:.3g}")
    if grid[0] == 0:
        ref = -baseline_marginal_log_pmf(baseline, anchor)
        if abs(kl[0] - ref) > 1e-12 * max(1.0, ref):
            ok = False
            diags.append(f"KL at omega=0 is {kl[0]}, expected {ref}")
    margin = float(min(d_tv.min(), d_kl.min()))
    return TheoremReport("3", f"n={len(anchor)} anchor={tuple(anchor)} {baseline} psi={psi} "
                              f"omega={grid[0]:g}..{grid[-1]:g} ({len(grid)} pts)",
                         ok, margin, diags)


def anchors_agree(anchor, other, shrinkage) -> bool:
    """True when the anchors induce the same co-clustering on every pair of
    items with positive shrinkage."""
    live = [i for i, w in enumerate(shrinkage) if w > 0]
    return all((anchor[i] == anchor[j]) == (other[i] == other[j])
               for a, i in enumerate(live) for j in live[a + 1:])


def verify_zero_shrinkage(anchor, anchor_star, shrinkage, baseline: BaselineSpec,
                          psi: float = 0.5, tol: float = 1e-12) -> TheoremReport:
    """Anchors that agree on the positive-shrinkage items give identical pmfs for
    every partition and every order."""
    if not anchors_agree(anchor, anchor_star, shrinkage):
        raise DomainError("anchors disagree on a pair of positive-shrinkage items")
    n = len(anchor)
    parts = _partition_array(n)
    perms = all_permutations(n)
    one = K.sp_logpmf_table(parts, perms, *kernel_args(SpParams(anchor, shrinkage, psi, baseline)))
    two = K.sp_logpmf_table(parts, perms,
                            *kernel_args(SpParams(anchor_star, shrinkage, psi, baseline)))
    both_inf = np.isneginf(one) & np.isneginf(two)
    gap = np.where(both_inf, 0.0, np.abs(one - two))
    worst = float(np.nanmax(np.where(np.isnan(gap), np.inf, gap)))
    diags = []
    if worst > tol:
        a, b = np.unravel_index(np.argmax(gap), gap.shape)
        diags.append(f"p={_tup(parts[a])} perm={_tup(perms[b])} gap={worst:.3g}")
    return TheoremReport("4", f"n={n} anchors {tuple(anchor)} vs {tuple(anchor_star)} "
                              f"shrinkage={tuple(shrinkage)} psi={psi}",
                         worst <= tol, tol - worst, diags)


def predicted_limiting(anchor, mask, baseline: BaselineSpec) -> set:
    """Partitions whose restriction to positive-mask items matches the anchor's
    and which have positive baseline probability."""
    n = len(anchor)
    live = [i for i in range(n) if mask[i]]
    out = set()
    for p in enumerate_partitions(n):
        agree = all((p[i] == p[j]) == (anchor[i] == anchor[j])
                    for a, i in enumerate(live) for j in live[a + 1:])
        if agree and np.isfinite(baseline_log_pmf(baseline, p)):
            out.add(p)
    return out


def limiting_count(anchor, mask) -> int:
    """B(a, b): a zero-mask items, b anchor clusters holding a positive-mask item."""
    a = sum(1 for s in mask if not s)
    b = len({anchor[i] for i, s in enumerate(mask) if s})
    return extended_bell(a, b)


def limiting_partitions(anchor, mask, psi: float, baseline: BaselineSpec,
                        omega_big: float = 1e4, eps: float = 1e-8):
    """Partitions keeping marginal mass above ``eps`` at shrinkage ``omega_big * mask``.

    Returns the set plus reports for the characterization (theorem 5) and
    the count B(a, b) (theorem 6).
    """
    if not 0 < psi < 1:
        raise DomainError(f"limiting partitions are characterized for grit in (0, 1)")
    mask = tuple(1 if s else 0 for s in mask)
    params = SpParams(anchor, tuple(omega_big * s for s in mask), psi, baseline)
    parts, logp = exact_log_table(params)
    found = {tuple(int(v) for v in row) for row, lp in zip(parts, logp) if lp > log(eps)}
    expected = predicted_limiting(anchor, mask, baseline)
    kept = logp[logp > log(eps)]
    dropped = logp[logp <= log(eps)]
    # separation between the smallest surviving mass and the largest vanishing one
    sep = (float(kept.min()) if len(kept) else -np.inf) - (
        float(dropped.max()) if len(dropped) else log(eps))
    grid = (f"n={len(anchor)} anchor={tuple(anchor)} mask={mask} psi={psi} {baseline} "
            f"omega={omega_big:g} eps={eps:g}")
    diags5 = []
    if found != expected:
        diags5.append(f"extra={sorted(found - expected)} missing={sorted(expected - found)}")
    count = limiting_count(anchor, mask)
    rep5 = TheoremReport("5", grid, found == expected, sep, diags5)
    rep6 = TheoremReport("6", grid, len(found) == count, -float(abs(len(found) - count)),
                         [] if len(found) == count else [f"found {len(found)}, B(a,b)={count}"])
    return found, rep5, rep6


def _random_anchor(rng, n: int) -> Partition:
    return canonicalize(rng.integers(0, max(2, n // 2 + 1), size=n))


def run_theorem_suite(theorems=None, seed: int = 20240611) -> list[TheoremReport]:
    """Run every check on its documented grid; ``theorems`` filters by id prefix
    (e.g. ``["1", "6"]``)."""
    def wanted(tid):
        return theorems is None or any(tid.startswith(str(t)) for t in theorems)

    rng = np.random.default_rng(seed)
    reports = []
    fig_anchor = (1, 1, 2, 2)
    crp = Ewens(1.0)
    grid = np.arange(0.0, 10.0 + 1e-9, 0.5)
    if any(wanted(t) for t in ("1a", "1b", "1c", "1d")):
        for anchor, base in [(fig_anchor, crp), ((1, 1, 2, 3, 3), EwensPitman(0.5, 0.25)),
                             ((1, 2, 2, 1, 3), JensenLiu(1.0)),
                             ((1, 1, 2, 2, 2), UniformPartition(5))]:
            reports += [r for r in verify_limits(anchor, base) if wanted(r.theorem)]
    random_anchor = _random_anchor(rng, 5)
    curves = [(fig_anchor, crp, 0.3), (random_anchor, crp, 0.7),
              ((1, 2, 2, 3, 3), UniformPartition(5), 0.5), ((1, 1, 2, 1), JensenLiu(2.0), 0.2)]
    if wanted("2"):
        reports += [verify_monotonicity(a, b, psi, grid) for a, b, psi in curves]
    if wanted("3"):
        reports += [verify_divergences(a, b, psi, grid) for a, b, psi in curves]
    if wanted("4"):
        reports.append(verify_zero_shrinkage((1, 2, 2, 3), (1, 2, 2, 2), (2.0, 2.0, 2.0, 0.0), crp))
        reports.append(verify_zero_shrinkage((1, 1, 2, 2), (1, 2, 3, 1), (0.0,) * 4, crp))
        for _ in range(2):
            mask = rng.integers(0, 2, size=5)
            base_anchor = _random_anchor(rng, 5)
            other = list(base_anchor)
            for i in np.flatnonzero(mask == 0):
                other[i] = int(rng.integers(1, 7))
            shrink = tuple(float(w) for w in mask * rng.gamma(3.0, 1.0, size=5))
            reports.append(verify_zero_shrinkage(base_anchor, canonicalize(other), shrink,
                                                 EwensPitman(1.0, 0.2), psi=0.4))
    if wanted("5") or wanted("6"):
        cases = [((1, 1, 2, 3), (1, 1, 1, 0)), ((1, 1, 2, 2), (1, 1, 1, 1)),
                 ((1, 1, 2, 2, 3), (1, 1, 0, 0, 1))]
        for _ in range(3):
            cases.append((_random_anchor(rng, 5), tuple(int(v) for v in rng.integers(0, 2, 5))))
        for anchor, mask in cases:
            _, r5, r6 = limiting_partitions(anchor, mask, 0.3, crp)
            reports += [r for r in (r5, r6) if wanted(r.theorem)]
    return reports
