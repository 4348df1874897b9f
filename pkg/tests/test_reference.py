from math import exp, log

import numpy as np
import pytest

from shrinkpart import _kernels as K
from shrinkpart.baselines import (AllocationState, Ewens, JensenLiu, baseline_capf,
                                  baseline_log_pmf)
from shrinkpart.exceptions import CapacityError, DomainError
from shrinkpart.partitions import enumerate_partitions, vi_distance
from shrinkpart.reference import (CppParams, LspParams, cpp_log_pmf, lsp_capf, lsp_log_pmf,
                                  lsp_marginal_log_pmf)


def test_cpp_zero_shrinkage_is_baseline():
    for n in (3, 6, 8):
        anchor = tuple(1 + (i % 3) for i in range(n))
        params = CppParams(anchor, 0.0, "vi", Ewens(1.0))
        for p in enumerate_partitions(n)[::37]:
            assert cpp_log_pmf(params, p) == pytest.approx(baseline_log_pmf(Ewens(1.0), p), abs=1e-12)


def test_cpp_normalizes_and_concentrates():
    for dist in ("vi", "binder"):
        params = CppParams((1, 1, 2, 2, 3), 1.5, dist, Ewens(1.0))
        total = sum(exp(cpp_log_pmf(params, p)) for p in enumerate_partitions(5))
        assert total == pytest.approx(1.0, abs=1e-10)
    strong = CppParams((1, 1, 2, 2), 50.0, "vi", Ewens(1.0))
    assert exp(cpp_log_pmf(strong, (1, 1, 2, 2))) > 0.99


def test_cpp_matches_direct_formula():
    params = CppParams((1, 1, 2), 0.7, "vi", Ewens(2.0))
    weights = {p: exp(baseline_log_pmf(Ewens(2.0), p) - 0.7 * vi_distance(p, (1, 1, 2)))
               for p in enumerate_partitions(3)}
    norm = sum(weights.values())
    for p, w in weights.items():
        assert exp(cpp_log_pmf(params, p)) == pytest.approx(w / norm, rel=1e-12)


def test_cpp_limits():
    with pytest.raises(CapacityError):
        cpp_log_pmf(CppParams((1,) * 11, 1.0, "vi", Ewens(1.0)), (1,) * 11)
    with pytest.raises(DomainError):
        CppParams((1, 2), 1.0, "hamming", Ewens(1.0))


def test_lsp_zero_shrinkage_is_jensen_liu():
    params = LspParams((1, 2, 2, 1, 3), 0.0)
    for p in enumerate_partitions(5):
        assert lsp_log_pmf(params, p, (4, 2, 0, 1, 3)) == pytest.approx(
            baseline_log_pmf(JensenLiu(1.0), p, (4, 2, 0, 1, 3)), abs=1e-12)
    state = AllocationState.from_partial(5, [0, 1], [1, 2])
    for c in (1, 2, 3):
        assert lsp_capf(params, state, 3, 2, c) == pytest.approx(
            baseline_capf(JensenLiu(1.0), state, c), abs=1e-12)


def test_lsp_capf_examples():
    params = LspParams((1, 1), 3.0)
    assert lsp_capf(params, AllocationState(2), 1, 0, 1) == 1.0
    state = AllocationState.from_partial(2, [0], [1])
    # weights (1 + 3) / (1 + 1 + 3) and 1 / (1 + 1 + 3)
    assert lsp_capf(params, state, 2, 1, 1) == pytest.approx(0.8, abs=1e-12)
    assert lsp_capf(params, state, 2, 1, 2) == pytest.approx(0.2, abs=1e-12)


def test_lsp_hand_computed_pmf():
    # step 2: join 2/3 vs new 1/3; step 3: join 1/4 vs new 2/3 -> new 8/11
    params = LspParams((1, 1, 2), 1.0)
    assert exp(lsp_log_pmf(params, (1, 1, 2))) == pytest.approx(16 / 33, abs=1e-12)


def test_lsp_normalizes_and_concentrates():
    params = LspParams((1, 1, 2, 2, 3), 2.0)
    total = sum(exp(lsp_log_pmf(params, p, (3, 1, 0, 4, 2))) for p in enumerate_partitions(5))
    assert total == pytest.approx(1.0, abs=1e-10)
    strong = LspParams((1, 2, 2, 1), 1e6)
    assert exp(lsp_log_pmf(strong, (1, 2, 2, 1))) > 0.999


def test_lsp_depends_on_order_but_marginal_does_not():
    params = LspParams((1, 1, 2), 1.0)
    values = {round(lsp_log_pmf(params, p, perm), 12)
              for p in [(1, 2, 1)] for perm in [(0, 1, 2), (2, 1, 0), (1, 2, 0)]}
    assert len(values) > 1
    total = sum(exp(lsp_marginal_log_pmf(params, p)) for p in enumerate_partitions(3))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_lsp_kernel_matches_readable_path(rng):
    params = LspParams((1, 1, 2, 2, 3), 2.0)
    anchor = np.array(params.anchor)
    for _ in range(5):
        perm = rng.permutation(5)
        for p in enumerate_partitions(5):
            got = K.lsp_logpmf(np.array(p), perm.astype(np.int64), anchor, 2.0)
            assert got == pytest.approx(lsp_log_pmf(params, p, perm), abs=1e-12)


def test_anchor_mass_increases_with_shrinkage():
    grid = np.linspace(0.0, 9.0, 10)
    cpp = [cpp_log_pmf(CppParams((1, 1, 2, 2), w, "binder", Ewens(1.0)), (1, 1, 2, 2)) for w in grid]
    lsp = [lsp_marginal_log_pmf(LspParams((1, 1, 2, 2), w), (1, 1, 2, 2)) for w in grid]
    assert np.all(np.diff(cpp) > 0)
    assert np.all(np.diff(lsp) > 0)
