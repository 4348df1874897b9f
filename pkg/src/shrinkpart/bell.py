"""Extended Bell numbers B(a, b).

B(a, b) counts the partitions reachable by allocating ``a`` further items
when ``b`` clusters already exist, so B(a, 0) is the ordinary Bell number.
Built from B(0, b) = 1 and B(a + 1, b) = b B(a, b) + B(a, b + 1).
"""

import functools
import math
import threading

import numpy as np

from .exceptions import CapacityError, DomainError

EXACT_CAPACITY = 600  # a + b bound for the exact big-integer table
LOG_CAPACITY = 20000  # a + b bound for the log-domain recurrence

_lock = threading.Lock()
# _rows[a][b] = B(a, b) for a + b <= _size
_rows: list[list[int]] = [[1]]
_size = 0


def _grow(size: int) -> None:
    global _size
    with _lock:
        if size <= _size:
            return
        rows = [list(r) for r in _rows]
        rows[0] = [1] * (size + 1)
        for a in range(1, size + 1):
            prev = rows[a - 1]
            width = size - a + 1
            row = rows[a] if a < len(rows) else []
            for b in range(len(row), width):
                row.append(b * prev[b] + prev[b + 1])
            if a < len(rows):
                rows[a] = row
            else:
                rows.append(row)
        _rows[:] = rows
        _size = size


def _check(a: int, b: int) -> None:
    if a < 0 or b < 0:
        raise DomainError(f"B(a, b) needs a, b >= 0, got ({a}, {b})")


def extended_bell(a: int, b: int) -> int:
    _check(a, b)
    if a + b > EXACT_CAPACITY:
        raise CapacityError(f"a + b = {a + b} exceeds exact capacity {EXACT_CAPACITY}")
    if a + b > _size:
        _grow(max(a + b, min(2 * _size, EXACT_CAPACITY), 16))
    return _rows[a][b]


def bell(n: int) -> int:
    return extended_bell(n, 0)


@functools.lru_cache(maxsize=4)
def _log_table(size: int) -> np.ndarray:
    """Log-domain recurrence; entry [a, b] valid for a + b <= size."""
    out = np.full((size + 1, size + 1), np.nan)
    out[0, :] = 0.0
    with np.errstate(divide="ignore"):
        log_b = np.log(np.arange(size + 1, dtype=float))
    for a in range(1, size + 1):
        b = np.arange(0, size - a + 1)
        prev = out[a - 1]
        stay = np.where(b > 0, log_b[b] + prev[b], -np.inf)
        out[a, b] = np.logaddexp(stay, prev[b + 1])
    return out


def log_extended_bell(a: int, b: int) -> float:
    """Natural log of B(a, b); exact-integer backed within the exact table."""
    _check(a, b)
    if a + b <= EXACT_CAPACITY:
        return math.log(extended_bell(a, b))
    if a + b > LOG_CAPACITY:
        raise CapacityError(f"a + b = {a + b} exceeds log capacity {LOG_CAPACITY}")
    return float(_log_table(a + b)[a, b])


def log_bell_table(size: int) -> np.ndarray:
    """Dense float table with ``[a, b] = log B(a, b)`` for a, b <= size.

    Entries with a + b > size are computed as well (the table is built to
    2 * size internally) so the whole square is usable.
    """
    if 2 * size <= EXACT_CAPACITY:
        out = np.empty((size + 1, size + 1))
        for a in range(size + 1):
            for b in range(size + 1):
                out[a, b] = math.log(extended_bell(a, b))
        return out
    if 2 * size > LOG_CAPACITY:
        raise CapacityError(f"log Bell table of size {size} exceeds capacity")
    return _log_table(2 * size)[: size + 1, : size + 1].copy()
