"""Set partitions of {1, ..., n} as canonical cluster-label tuples.

A partition is a tuple of 1-based cluster labels in first-appearance order,
e.g. ``(1, 1, 2, 1, 3)``.  Permutations (allocation orders) are tuples of
0-based item indices.
"""

from collections import Counter
from math import comb, log
from typing import Iterator, Sequence

import numpy as np

from .exceptions import CapacityError, DomainError

MAX_ENUMERATION_N = 12

Partition = tuple[int, ...]
Permutation = tuple[int, ...]


def canonicalize(raw_labels: Sequence) -> Partition:
    """Relabel clusters by order of first appearance, starting at 1."""
    if len(raw_labels) == 0:
        raise DomainError("cannot canonicalize an empty label vector")
    mapping: dict = {}
    out = []
    for lab in raw_labels:
        key = lab.item() if isinstance(lab, np.generic) else lab
        if key not in mapping:
            mapping[key] = len(mapping) + 1
        out.append(mapping[key])
    return tuple(out)


def is_canonical(labels: Sequence[int]) -> bool:
    top = 0
    for lab in labels:
        if lab < 1 or lab > top + 1:
            return False
        top = max(top, lab)
    return len(labels) > 0


def num_clusters(p: Sequence[int]) -> int:
    return len(set(p))


def iter_partitions(n: int) -> Iterator[Partition]:
    """Yield every partition of n items as a restricted growth string."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if n > MAX_ENUMERATION_N:
        raise CapacityError(f"enumeration capped at n={MAX_ENUMERATION_N}, got {n}")
    labels = [1] * n
    maxes = [1] * n  # maxes[i] = max(labels[:i+1])
    while True:
        yield tuple(labels)
        i = n - 1
        while i > 0 and labels[i] > maxes[i - 1]:
            i -= 1
        if i == 0:
            return
        labels[i] += 1
        maxes[i] = max(maxes[i - 1], labels[i])
        for j in range(i + 1, n):
            labels[j] = 1
            maxes[j] = maxes[i]


def enumerate_partitions(n: int) -> list[Partition]:
    return list(iter_partitions(n))


def check_same_size(p: Sequence, q: Sequence) -> None:
    if len(p) != len(q):
        raise DomainError(f"partition sizes differ: {len(p)} vs {len(q)}")


def _contingency(p: Sequence, q: Sequence) -> np.ndarray:
    _, pi = np.unique(np.asarray(p), return_inverse=True)
    _, qi = np.unique(np.asarray(q), return_inverse=True)
    table = np.zeros((pi.max() + 1, qi.max() + 1), dtype=np.int64)
    np.add.at(table, (pi, qi), 1)
    return table


def adjusted_rand_index(p: Sequence, q: Sequence) -> float:
    """Hubert-Arabie adjusted Rand index.

    Returns 1.0 when the chance-corrected denominator vanishes, which only
    happens when both partitions are the single-cluster partition or both
    are all singletons (i.e. identical).
    """
    check_same_size(p, q)
    n = len(p)
    table = _contingency(p, q)
    index = sum(comb(int(v), 2) for v in table.ravel())
    sum_a = sum(comb(int(v), 2) for v in table.sum(axis=1))
    sum_b = sum(comb(int(v), 2) for v in table.sum(axis=0))
    total = comb(n, 2)
    expected = sum_a * sum_b / total if total else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return (index - expected) / (max_index - expected)


def binder_distance(p: Sequence, q: Sequence) -> float:
    """Number of item pairs whose co-clustering status differs (unit weights)."""
    check_same_size(p, q)
    a = np.asarray(p)
    b = np.asarray(q)
    co_a = a[:, None] == a[None, :]
    co_b = b[:, None] == b[None, :]
    return float(np.triu(co_a != co_b, k=1).sum())


def _entropy(counts) -> float:
    total = sum(counts)
    return -sum(c / total * log(c / total) for c in counts if c > 0)


def vi_distance(p: Sequence, q: Sequence) -> float:
    """Variation of information H(p) + H(q) - 2 I(p, q), natural log."""
    check_same_size(p, q)
    n = len(p)
    h_p = _entropy(Counter(p).values())
    h_q = _entropy(Counter(q).values())
    h_joint = _entropy(Counter(zip(p, q)).values())
    mutual = h_p + h_q - h_joint
    return max(0.0, h_p + h_q - 2.0 * mutual) if n else 0.0


def coclustering(p: Sequence) -> np.ndarray:
    a = np.asarray(p)
    return (a[:, None] == a[None, :]).astype(float)


def natural_permutation(n: int) -> Permutation:
    return tuple(range(n))


def check_permutation(perm: Sequence[int], n: int) -> Permutation:
    perm = tuple(int(v) for v in perm)
    if len(perm) != n or sorted(perm) != list(range(n)):
        raise DomainError(f"not a permutation of 0..{n - 1}: {perm}")
    return perm


def parse_partition(text: str) -> Partition:
    """Parse ``"1,1,2,2"`` (any integer labels) into a canonical partition."""
    parts = [s for s in text.replace(" ", "").split(",") if s]
    if not parts:
        raise DomainError("empty partition string")
    try:
        return canonicalize([int(s) for s in parts])
    except ValueError as exc:
        raise DomainError(f"bad partition string {text!r}") from exc


def format_partition(p: Sequence[int]) -> str:
    return ",".join(str(int(v)) for v in p)
