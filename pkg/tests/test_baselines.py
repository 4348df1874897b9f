from fractions import Fraction
from math import exp, log

import numpy as np
import pytest

from shrinkpart.baselines import (AllocationState, Ewens, EwensPitman, FixedPartition,
                                  JensenLiu, UniformPartition, baseline_capf,
                                  baseline_from_config, baseline_log_pmf, baseline_log_weights,
                                  baseline_to_config)
from shrinkpart.bell import bell
from shrinkpart.exceptions import ConfigError, DomainError
from shrinkpart.partitions import enumerate_partitions

SPECS = [Ewens(1.0), EwensPitman(0.5, 0.3), EwensPitman(-0.2, 0.4), JensenLiu(1.0),
         JensenLiu(2.5)]


def state_of(labels):
    return AllocationState.from_partial(8, list(range(len(labels))), labels)


def ewens_pmf(p, alpha):
    """Ewens sampling formula, exact."""
    sizes = [p.count(c) for c in set(p)]
    num = Fraction(alpha) ** len(sizes)
    for s in sizes:
        for j in range(1, s):
            num *= j
    den = Fraction(1)
    for j in range(len(p)):
        den *= alpha + j
    return num / den


@pytest.mark.parametrize("spec, labels, expected", [
    (Ewens(1.0), (1, 1), [2 / 3, 1 / 3]),
    (EwensPitman(1.0, 0.5), (1,), [0.25, 0.75]),
    (JensenLiu(1.0), (1, 1), [0.5, 0.5]),
])
def test_capf_examples(spec, labels, expected):
    state = state_of(labels)
    got = [baseline_capf(spec, state, c) for c in range(1, len(expected) + 1)]
    assert got == pytest.approx(expected, abs=1e-12)


def test_uniform_capf_example():
    state = AllocationState.from_partial(3, [0], [1])
    got = [baseline_capf(UniformPartition(3), state, c) for c in (1, 2)]
    assert got == pytest.approx([2 / 5, 3 / 5], abs=1e-12)


def test_first_allocation_is_certain():
    for spec in SPECS + [UniformPartition(4)]:
        assert baseline_capf(spec, AllocationState(4), 1) == 1.0


def test_capf_sums_to_one(rng):
    for spec in SPECS + [UniformPartition(8), UniformPartition(30)]:
        n = spec.n if isinstance(spec, UniformPartition) else 8
        for _ in range(20):
            k = int(rng.integers(1, n))
            raw = rng.integers(0, 4, size=k)
            state = AllocationState.from_partial(n, list(range(k)), raw)
            total = np.exp(baseline_log_weights(spec, state, k)).sum()
            assert total == pytest.approx(1.0, abs=1e-12)


def test_log_pmf_examples():
    for p in enumerate_partitions(3):
        assert baseline_log_pmf(UniformPartition(3), p) == pytest.approx(log(1 / 5), abs=1e-12)
    assert baseline_log_pmf(Ewens(1.0), (1, 1)) == pytest.approx(log(0.5), abs=1e-12)
    assert baseline_log_pmf(FixedPartition((1, 2)), (1, 2)) == 0.0
    assert baseline_log_pmf(FixedPartition((1, 2)), (1, 1)) == float("-inf")


def test_ewens_matches_sampling_formula():
    for alpha in (0.5, 1.0, 3.0):
        for p in enumerate_partitions(5):
            ref = log(float(ewens_pmf(p, alpha)))
            assert baseline_log_pmf(Ewens(alpha), p) == pytest.approx(ref, abs=1e-12)
    assert exp(baseline_log_pmf(Ewens(1.0), (1, 1, 2, 2))) == pytest.approx(1 / 24, abs=1e-15)


def test_exchangeable_specs_ignore_order(rng):
    parts = enumerate_partitions(6)
    for spec in (EwensPitman(0.7, 0.25), UniformPartition(6)):
        for p in parts[::7]:
            ref = baseline_log_pmf(spec, p)
            for _ in range(20):
                perm = rng.permutation(6)
                assert baseline_log_pmf(spec, p, perm) == pytest.approx(ref, abs=1e-12)


def test_uniform_is_uniform():
    for n in range(1, 9):
        for p in enumerate_partitions(n)[:: max(1, n * 3)]:
            assert exp(baseline_log_pmf(UniformPartition(n), p)) == pytest.approx(1 / bell(n), rel=1e-12)


def test_jensen_liu_depends_on_order():
    values = {round(baseline_log_pmf(JensenLiu(1.0), (1, 1, 2), perm), 12)
              for perm in [(0, 1, 2), (2, 0, 1), (0, 2, 1)]}
    assert len(values) > 1


def test_pmfs_normalize(rng):
    for n in (3, 6, 8):
        parts = enumerate_partitions(n)
        target = parts[len(parts) // 2]
        for spec in [Ewens(1.3), EwensPitman(0.4, 0.5), JensenLiu(0.7), UniformPartition(n),
                     FixedPartition(target)]:
            perm = rng.permutation(n)
            total = sum(exp(baseline_log_pmf(spec, p, perm)) for p in parts)
            assert total == pytest.approx(1.0, abs=1e-9)


def test_fixed_capf_follows_target():
    spec = FixedPartition((1, 2, 1))
    state = AllocationState.from_partial(3, [0, 1], [1, 2])
    assert baseline_capf(spec, state, 1, item=2) == 1.0
    assert baseline_capf(spec, state, 3, item=2) == 0.0


@pytest.mark.parametrize("bad", [lambda: EwensPitman(1.0, 1.0), lambda: EwensPitman(-0.5, 0.2),
                                 lambda: EwensPitman(0.0, 0.0), lambda: JensenLiu(0.0),
                                 lambda: FixedPartition((2, 1))])
def test_invalid_specs(bad):
    with pytest.raises(DomainError):
        bad()


def test_candidate_out_of_range():
    with pytest.raises(DomainError):
        baseline_capf(Ewens(1.0), state_of((1, 1)), 3)


def test_config_round_trip():
    for spec in SPECS + [UniformPartition(5), FixedPartition((1, 1, 2))]:
        assert baseline_from_config(baseline_to_config(spec)) == spec
    with pytest.raises(ConfigError):
        baseline_from_config({"family": "nope"})
    with pytest.raises(ConfigError):
        baseline_from_config({"family": "ewens_pitman", "discount": 2.0})
