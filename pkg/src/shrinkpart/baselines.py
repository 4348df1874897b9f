"""Conditional allocation probability functions (CAPFs) for baseline
partition distributions.

Every baseline is a frozen dataclass.  Items are allocated one at a time
along a permutation; :class:`AllocationState` tracks what has been
allocated so far.  Cluster labels inside the state are 1-based and numbered
in allocation order, so the candidates at step ``k`` are ``1..q`` (existing)
and ``q + 1`` (new).
"""

from dataclasses import dataclass, field
from math import log
from typing import Sequence, Union

import numpy as np

from .bell import extended_bell, log_extended_bell
from .exceptions import ConfigError, DomainError
from .partitions import Partition, canonicalize, check_permutation, is_canonical

NEG_INF = float("-inf")
EXACT_UP_LIMIT = 25


@dataclass(frozen=True)
class EwensPitman:
    concentration: float = 1.0
    discount: float = 0.0

    def __post_init__(self):
        a, d = self.concentration, self.discount
        if not 0.0 <= d < 1.0:
            raise DomainError(f"discount must lie in [0, 1), got {d}")
        if not a > -d:
            raise DomainError(f"concentration must exceed -discount, got {a}")
        if a == 0.0 and d == 0.0:
            raise DomainError("concentration = discount = 0 is degenerate")


def Ewens(concentration: float = 1.0) -> EwensPitman:
    return EwensPitman(concentration, 0.0)


@dataclass(frozen=True)
class UniformPartition:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"uniform partition needs n >= 1, got {self.n}")


@dataclass(frozen=True)
class JensenLiu:
    mass: float = 1.0

    def __post_init__(self):
        if not self.mass > 0:
            raise DomainError(f"Jensen-Liu mass must be positive, got {self.mass}")


@dataclass(frozen=True)
class FixedPartition:
    target: Partition

    def __post_init__(self):
        if not is_canonical(self.target):
            raise DomainError(f"fixed target must be canonical, got {self.target}")


BaselineSpec = Union[EwensPitman, UniformPartition, JensenLiu, FixedPartition]


@dataclass
class AllocationState:
    """Partial allocation of n items.

    ``labels[i]`` is 0 while item ``i`` is unallocated.
    """

    n: int
    labels: list = field(default=None)
    sizes: list = field(default_factory=list)
    order: list = field(default_factory=list)

    def __post_init__(self):
        if self.labels is None:
            self.labels = [0] * self.n

    @property
    def step(self) -> int:
        """1-based index of the next allocation."""
        return len(self.order) + 1

    @property
    def num_clusters(self) -> int:
        return len(self.sizes)

    def allocate(self, item: int, label: int) -> None:
        q = len(self.sizes)
        if not 1 <= label <= q + 1:
            raise DomainError(f"label {label} not in 1..{q + 1}")
        if self.labels[item] != 0:
            raise DomainError(f"item {item} already allocated")
        if label == q + 1:
            self.sizes.append(0)
        self.sizes[label - 1] += 1
        self.labels[item] = label
        self.order.append(item)

    @classmethod
    def from_partial(cls, n: int, items: Sequence[int], labels: Sequence[int]):
        """Replay allocations of ``items`` with raw labels (any ints)."""
        state = cls(n)
        relabel: dict = {}
        for item, lab in zip(items, labels):
            if lab not in relabel:
                relabel[lab] = len(relabel) + 1
            state.allocate(item, relabel[lab])
        return state


def baseline_log_weights(spec: BaselineSpec, state: AllocationState,
                         item: int = None) -> np.ndarray:
    """Log CAPF over candidates ``1..q+1`` for the next allocation.

    ``item`` is the index being allocated; only :class:`FixedPartition`
    needs it.
    """
    k = state.step
    q = state.num_clusters
    if k == 1:
        return np.zeros(1)
    if isinstance(spec, EwensPitman):
        a, d = spec.concentration, spec.discount
        denom = log(k - 1 + a)
        sizes = np.asarray(state.sizes, dtype=float)
        out = np.empty(q + 1)
        out[:q] = np.log(sizes - d) - denom
        out[q] = log(a + d * q) - denom
        return out
    if isinstance(spec, JensenLiu):
        a = spec.mass
        out = np.full(q + 1, -log(q + a))
        out[q] = log(a) - log(q + a)
        return out
    if isinstance(spec, UniformPartition):
        n = spec.n
        if k > n:
            raise DomainError(f"uniform partition of {n} items has no step {k}")
        out = np.empty(q + 1)
        if n <= EXACT_UP_LIMIT:
            total = extended_bell(n - k + 1, q)
            out[:q] = log(extended_bell(n - k, q) / total)
            out[q] = log(extended_bell(n - k, q + 1) / total)
        else:
            total = log_extended_bell(n - k + 1, q)
            out[:q] = log_extended_bell(n - k, q) - total
            out[q] = log_extended_bell(n - k, q + 1) - total
        return out
    if isinstance(spec, FixedPartition):
        if item is None:
            raise DomainError("fixed-partition CAPF needs the item being allocated")
        target = spec.target
        choice = q + 1
        for j in state.order:
            if target[j] == target[item]:
                choice = state.labels[j]
                break
        out = np.full(q + 1, NEG_INF)
        out[choice - 1] = 0.0
        return out
    raise DomainError(f"unknown baseline {spec!r}")


def _check_candidate(state: AllocationState, candidate: int) -> None:
    if not 1 <= candidate <= state.num_clusters + 1:
        raise DomainError(
            f"candidate {candidate} not in 1..{state.num_clusters + 1}")


def baseline_capf(spec: BaselineSpec, state: AllocationState, candidate: int,
                  item: int = None) -> float:
    _check_candidate(state, candidate)
    return float(np.exp(baseline_log_weights(spec, state, item)[candidate - 1]))


def baseline_log_pmf(spec: BaselineSpec, p: Sequence[int],
                     perm: Sequence[int] = None) -> float:
    """Sum of log CAPFs along ``perm`` (natural order when omitted)."""
    n = len(p)
    perm = tuple(range(n)) if perm is None else check_permutation(perm, n)
    if isinstance(spec, UniformPartition) and spec.n != n:
        raise DomainError(f"uniform baseline built for n={spec.n}, got {n}")
    if isinstance(spec, FixedPartition) and len(spec.target) != n:
        raise DomainError("fixed target size differs from partition size")
    state = AllocationState(n)
    relabel: dict = {}
    total = 0.0
    for item in perm:
        raw = p[item]
        cand = relabel.get(raw, state.num_clusters + 1)
        total += baseline_log_weights(spec, state, item)[cand - 1]
        if raw not in relabel:
            relabel[raw] = cand
        state.allocate(item, cand)
    return float(total)


def baseline_from_config(cfg: dict, n: int = None) -> BaselineSpec:
    """Build a baseline from ``{"family": ..., <parameters>}``."""
    if not isinstance(cfg, dict) or "family" not in cfg:
        raise ConfigError(f"baseline config needs a 'family' key: {cfg!r}")
    family = str(cfg["family"]).lower()
    try:
        if family in ("ewens_pitman", "ewens", "crp"):
            return EwensPitman(float(cfg.get("concentration", 1.0)),
                               float(cfg.get("discount", 0.0)))
        if family == "uniform":
            size = cfg.get("n", n)
            if size is None:
                raise ConfigError("uniform baseline needs n")
            return UniformPartition(int(size))
        if family == "jensen_liu":
            return JensenLiu(float(cfg.get("mass", 1.0)))
        if family == "fixed":
            target = cfg["target"]
            if isinstance(target, str):
                target = [int(v) for v in target.split(",")]
            return FixedPartition(canonicalize(target))
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown baseline family {family!r}")


def baseline_to_config(spec: BaselineSpec) -> dict:
    if isinstance(spec, EwensPitman):
        return {"family": "ewens_pitman", "concentration": spec.concentration,
                "discount": spec.discount}
    if isinstance(spec, UniformPartition):
        return {"family": "uniform", "n": spec.n}
    if isinstance(spec, JensenLiu):
        return {"family": "jensen_liu", "mass": spec.mass}
    return {"family": "fixed", "target": ",".join(map(str, spec.target))}


def is_exchangeable(spec: BaselineSpec) -> bool:
    return isinstance(spec, (EwensPitman, UniformPartition, FixedPartition))
