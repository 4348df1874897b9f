from collections import Counter
from math import exp, log

import numpy as np
import pytest

from shrinkpart.baselines import Ewens, EwensPitman, JensenLiu, baseline_log_pmf
from shrinkpart.bell import extended_bell
from shrinkpart.exceptions import CapacityError, DomainError
from shrinkpart.oracle import (anchors_agree, exact_distribution, limiting_partitions,
                               run_theorem_suite, verify_divergences, verify_limits,
                               verify_monotonicity, verify_zero_shrinkage)
from shrinkpart.sp import SpParams, sp_sample_many

GRID = np.arange(0.0, 10.0 + 1e-9, 0.5)


def test_exact_distribution_zero_shrinkage_is_ewens():
    params = SpParams.common((1, 1, 2, 2), 0.0, 0.3, Ewens(1.0))
    for mode in ("marginal", None, (3, 2, 1, 0)):
        dist = exact_distribution(params, mode)
        assert sum(dist.values()) == pytest.approx(1.0, abs=1e-9)
        for p, prob in dist.items():
            assert prob == pytest.approx(exp(baseline_log_pmf(Ewens(1.0), p)), abs=1e-12)


def test_exact_distribution_trivial_and_capacity():
    assert exact_distribution(SpParams((1,), (2.0,), 0.5, Ewens(1.0))) == {(1,): 1.0}
    with pytest.raises(CapacityError):
        exact_distribution(SpParams.common((1,) * 7, 1.0, 0.5, Ewens(1.0)))
    with pytest.raises(CapacityError):
        exact_distribution(SpParams.common((1,) * 9, 1.0, 0.5, Ewens(1.0)), None)


def test_exact_distribution_matches_sampler():
    params = SpParams.common((1, 1, 2, 2), 2.0, 0.3, Ewens(1.0))
    perm = (2, 0, 3, 1)
    dist = exact_distribution(params, perm)
    counts = Counter(map(tuple, sp_sample_many(params, 200000, perm, rng=11)))
    tv = 0.5 * sum(abs(counts.get(p, 0) / 200000 - q) for p, q in dist.items())
    assert tv < 0.01


def test_anchor_mass_grows_on_figure_grid():
    # compare the mass off the anchor: the anchor mass itself rounds to 1
    rest = []
    for w in range(11):
        dist = exact_distribution(SpParams.common((1, 1, 2, 2), w, 0.3, Ewens(1.0)))
        rest.append(sum(v for p, v in dist.items() if p != (1, 1, 2, 2)))
    assert all(b < a for a, b in zip(rest, rest[1:]))


def test_limit_checks_pass():
    reports = verify_limits((1, 1, 2, 2), Ewens(1.0))
    assert [r.theorem for r in reports] == ["1a", "1b", "1c", "1d"]
    assert all(r.passed for r in reports), [str(r) for r in reports]
    assert all(r.margin >= 0 for r in reports)


def test_wrong_sign_grit_fails_the_anchor_limit():
    reports = verify_limits((1, 1, 2, 2), Ewens(1.0), anchor_psis=(-0.5,))
    anchor_report = reports[1]
    assert not anchor_report.passed
    assert anchor_report.margin < 0
    assert "psi=-0.5" in "\n".join(anchor_report.diagnostics)
    assert "FAIL" in str(anchor_report)


def test_monotonicity_and_divergences():
    mono = verify_monotonicity((1, 1, 2, 2), Ewens(1.0), 0.3, GRID)
    div = verify_divergences((1, 1, 2, 2), Ewens(1.0), 0.3, GRID)
    assert mono.passed and mono.margin > 0
    assert div.passed and div.margin > 0
    with pytest.raises(DomainError):
        verify_monotonicity((1, 1, 2, 2), Ewens(1.0), 1.5, GRID)


def test_non_exchangeable_baseline_monotonicity():
    assert verify_monotonicity((1, 1, 2, 1), JensenLiu(2.0), 0.2, GRID).passed


def test_zero_shrinkage_items():
    assert verify_zero_shrinkage((1, 2, 2, 3), (1, 2, 2, 2), (2.0, 2.0, 2.0, 0.0), Ewens(1.0)).passed
    assert verify_zero_shrinkage((1, 1, 2, 2), (1, 2, 3, 1), (0.0,) * 4, Ewens(1.0)).passed
    assert not anchors_agree((1, 2, 2, 3), (1, 1, 2, 3), (1.0, 1.0, 1.0, 0.0))
    with pytest.raises(DomainError):
        verify_zero_shrinkage((1, 2, 2, 3), (1, 1, 2, 3), (1.0, 1.0, 1.0, 0.0), Ewens(1.0))


def test_limiting_partitions_of_figure_example():
    found, rep5, rep6 = limiting_partitions((1, 1, 2, 3), (1, 1, 1, 0), 0.3, Ewens(1.0))
    assert found == {(1, 1, 2, 1), (1, 1, 2, 2), (1, 1, 2, 3)}
    assert len(found) == extended_bell(1, 2) == 3
    assert rep5.passed and rep6.passed


def test_full_mask_leaves_only_anchor():
    found, _, rep6 = limiting_partitions((1, 1, 2, 2), (1, 1, 1, 1), 0.3, Ewens(1.0))
    assert found == {(1, 1, 2, 2)}
    assert rep6.passed


def test_two_free_items():
    expected = extended_bell(2, 2)
    found, rep5, rep6 = limiting_partitions((1, 1, 2, 2, 3), (1, 1, 0, 0, 1), 0.3, Ewens(1.0))
    assert expected == 2 * extended_bell(1, 2) + extended_bell(1, 3)
    assert len(found) == expected
    assert rep5.passed and rep6.passed


def test_limiting_set_stable_in_threshold():
    for anchor, mask in [((1, 1, 2, 3), (1, 1, 1, 0)), ((1, 2, 1, 3, 2), (1, 0, 1, 1, 0))]:
        a, _, _ = limiting_partitions(anchor, mask, 0.4, EwensPitman(1.0, 0.2), eps=1e-6)
        b, _, _ = limiting_partitions(anchor, mask, 0.4, EwensPitman(1.0, 0.2), eps=1e-8)
        assert a == b


@pytest.mark.slow
def test_theorem_suite_all_pass():
    reports = run_theorem_suite()
    assert {r.theorem for r in reports} == {"1a", "1b", "1c", "1d", "2", "3", "4", "5", "6"}
    failed = [str(r) for r in reports if not r.passed]
    assert not failed, "\n".join(failed)


def test_suite_filter():
    reports = run_theorem_suite(["6"])
    assert reports and {r.theorem for r in reports} == {"6"}
