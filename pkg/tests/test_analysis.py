import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opsketch import analysis
from opsketch.analysis import (discrete_bounds, expectation_bound_hs, expectation_bound_nystrom, failure_probability,
                               projector_perturbation, pythagoras_terms, structural_bound, tail_bound_eta,
                               tail_bound_eta_hat, tail_bound_hs, tail_bound_nystrom, w2_gelbrich, w2_upper)
from opsketch.kernels import AIRY
from opsketch.operator import reference_svd
from opsketch.sketch import sample_kl


def random_spsd(rng, n, rank=None):
    G = rng.standard_normal((n, rank or n))
    return G @ G.T


def test_expectation_bound_hs_examples():
    assert expectation_bound_hs([1.0, 0, 0, 0], 1, 2) == 0
    assert expectation_bound_hs([1.0, 0.1, 0.01], 1, 2) == pytest.approx(0.0202, rel=1e-12)
    with pytest.raises(ValueError):
        expectation_bound_hs([1.0, 0.1], 1, 1)
    with pytest.raises(ValueError):
        expectation_bound_hs([1.0, 0.1], 0, 3)


def test_tail_bound_eta_examples():
    assert tail_bound_eta([1.0, 1.0, 0, 0], 2, 4, 1, 1) == 0
    # 1.0954 + 1.3316 = 2.4270 from rounded summands; unrounded value 2.42712
    assert tail_bound_eta([1.0, 1.0, 1.0, 0, 0], 2, 4, 1, 1) == pytest.approx(2.4270, abs=2e-4)
    assert tail_bound_eta([1.0, 1.0, 1.0], 2, 4, 1, 1) == pytest.approx(
        math.sqrt(6 / 5) + math.e * math.sqrt(6) / 5, rel=1e-14)
    assert failure_probability(4, 2, 2) == pytest.approx(0.2603, abs=1e-4)
    for bad in ((1, 4, 1, 1), (2, 3, 1, 1), (2, 4, 0.5, 1), (2, 4, 1, 0.5)):
        with pytest.raises(ValueError):
            tail_bound_eta([1.0, 0.5, 0.1], *bad)


def test_nystrom_bound_examples():
    assert expectation_bound_nystrom([1.0, 0, 0], 1, 2) == 0
    assert expectation_bound_nystrom([1.0, 0.1, 0.01], 1, 2) == pytest.approx(0.22, rel=1e-12)
    # the deviation term scales with sigma_{k+1}^{1/2}
    s = [1.0, 0.25, 0.0, 0.0]
    second = tail_bound_eta_hat(s, 2, 4, 1, 1)
    assert second == 0
    s = [1.0, 1.0, 0.25]
    expected = math.sqrt(6 / 5) * 0.5 + math.e * math.sqrt(6) / 5 * 0.5
    assert tail_bound_eta_hat(s, 2, 4, 1, 1) == pytest.approx(expected, rel=1e-14)
    assert tail_bound_nystrom(s, 2, 4, 1, 1) == pytest.approx((0.5 + expected) ** 2, rel=1e-14)


def test_discrete_bounds_examples():
    rep = discrete_bounds([1.0, 1.0, 0, 0], 0.1, 2, 2)
    assert rep.bound_expectation == pytest.approx(0.01, rel=1e-12)
    assert rep.bound_tail == math.inf  # p < 4
    rep = discrete_bounds([1.0, 0.5, 0.1, 0.01, 0.001], 0.0, 2, 4, measured=0.123)
    assert rep.bound_expectation == expectation_bound_hs([1.0, 0.5, 0.1, 0.01, 0.001], 2, 4)
    assert rep.bound_tail == tail_bound_hs([1.0, 0.5, 0.1, 0.01, 0.001], 2, 4, 2, 2)
    assert rep.measured == 0.123
    assert rep.tail_sums["next"] == 0.1
    rep = discrete_bounds([1.0, 0.5, 0.1, 0.01, 0.001], 0.05, 2, 4, kind="trace")
    assert rep.bound_expectation == pytest.approx(0.05 + expectation_bound_nystrom([1.0, 0.5, 0.1, 0.01, 0.001], 2, 4))
    with pytest.raises(ValueError):
        discrete_bounds([1.0], 0.1, 1, 2, kind="op")
    with pytest.raises(ValueError):
        discrete_bounds([1.0], -0.1, 1, 2)


@given(st.lists(st.floats(0, 1), min_size=6, max_size=12), st.integers(2, 5), st.integers(0, 11),
       st.floats(0, 1))
def test_bounds_monotone_in_tail(values, k, idx, bump):
    s = np.sort(np.asarray(values))[::-1]
    idx = k + idx % (s.size - k) if s.size > k else k
    if idx >= s.size:
        return
    bigger = s.copy()
    bigger[idx] += bump
    fns = [lambda v: expectation_bound_hs(v, k, 4), lambda v: expectation_bound_nystrom(v, k, 4),
           lambda v: tail_bound_hs(v, k, 4, 2, 2), lambda v: tail_bound_nystrom(v, k, 4, 2, 2)]
    for fn in fns:
        assert fn(bigger) >= fn(s) * (1 - 1e-14)
    base = discrete_bounds(s, 0.1, k, 4)
    assert min(base.bound_expectation, base.bound_tail) >= 0
    assert base.bound_expectation >= np.sum(s[k:] ** 2)


def test_gelbrich_examples():
    C = random_spsd(np.random.default_rng(0), 5)
    assert w2_gelbrich(C, C) <= 1e-12 * math.sqrt(np.trace(C))
    assert w2_gelbrich(np.diag([4.0, 1.0]), np.eye(2)) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        w2_gelbrich(np.diag([1.0, -1.0]), np.eye(2))
    with pytest.raises(ValueError):
        w2_gelbrich(np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(2))


@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_gelbrich_symmetry_and_triangle(seed, n):
    rng = np.random.default_rng(seed)
    A, B, C = (random_spsd(rng, n, rng.integers(1, n + 1)) for _ in range(3))
    assert abs(w2_gelbrich(A, B) - w2_gelbrich(B, A)) <= 1e-10 * max(1.0, np.trace(A) + np.trace(B))
    assert w2_gelbrich(A, C) <= w2_gelbrich(A, B) + w2_gelbrich(B, C) + 1e-8 * max(1.0, np.trace(A + B + C))


@given(st.integers(0, 2**32 - 1), st.floats(0, 5))
def test_gelbrich_scaling(seed, c):
    C = random_spsd(np.random.default_rng(seed), 4)
    expected = abs(1 - math.sqrt(c)) * math.sqrt(np.trace(C))
    assert w2_gelbrich(C, c * C) == pytest.approx(expected, abs=1e-10 * max(1.0, np.trace(C)) ** 0.5 * 10)


@given(st.integers(0, 2**32 - 1), st.integers(2, 12), st.integers(1, 12))
@settings(max_examples=100)
def test_wasserstein_below_hs_truncation(seed, N, n):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((rng.integers(2, 10), N)) * 0.7 ** np.arange(N)
    n = min(n, N)
    An = A.copy()
    An[:, n:] = 0
    assert w2_gelbrich(A @ A.T, An @ An.T) <= w2_upper(A, n) + 1e-10


def test_w2_upper_reference():
    ref = reference_svd(AIRY)
    assert w2_upper(ref, 16) == pytest.approx(ref.block_complement_norm(ref.row_basis.size, 16))
    assert w2_upper(ref, ref.col_basis.size) == 0


@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(1, 8), st.integers(1, 4))
def test_pythagoras_split(seed, m, n, r):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((10, 9))
    r = min(r, m)
    Q = np.linalg.qr(rng.standard_normal((m, r)))[0]
    total, disc, proj = pythagoras_terms(A, m, n, Q)
    assert total == pytest.approx(disc + proj, rel=1e-10)


def test_structural_bound_per_trial():
    ref = reference_svd(AIRY)
    k = 5
    for seed in range(20):
        Y, omega = sample_kl(ref, k + 5, seed)
        Q = np.linalg.qr(Y.coeffs)[0]
        err = np.linalg.norm(ref.matrix - Q @ (Q.T @ ref.matrix)) ** 2
        assert structural_bound(ref, omega, k) - err >= -1e-9 * ref.hs_norm**2
    with pytest.raises(ValueError):
        structural_bound(ref, np.ones((3, 2)), 1)


@given(st.integers(0, 2**32 - 1), st.floats(1e-6, 1.0))
def test_projector_perturbation(seed, scale):
    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((12, 4))
    lhs, rhs = projector_perturbation(Y, Y + scale * rng.standard_normal((12, 4)))
    assert lhs <= rhs + 1e-10
    with pytest.raises(ValueError):
        projector_perturbation(Y, Y[:, :3])


def test_coupling_full_resolution_vanishes():
    ref = reference_svd(AIRY)
    rows = analysis.coupling_distance(AIRY, 3, 2, [(ref.row_basis.size, ref.col_basis.size)], trials=5)
    assert rows[0].median <= 1e-10
    assert rows[0].disc_error == 0 and rows[0].ratio == math.inf


def test_coupling_decreases_with_resolution():
    rows = analysis.coupling_distance(AIRY, 3, 2, [8, 16, 32, 64], seed=1, trials=50)
    med = [r.median for r in rows]
    assert all(b <= 1.1 * a for a, b in zip(med, med[1:]))
    assert max(r.ratio for r in rows) <= 10
    with pytest.raises(ValueError):
        analysis.coupling_distance(AIRY, 3, 2, [8], trials=0)
