import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from orthorot import NAMED_CRITERIA, OrthomaxSpec, orthomax_value
from orthorot.homotopy import canonicalize
from orthorot.numkernel import DimensionError
from orthorot.simulation import paper_matrices
from orthorot.structure import (
    diagnose_pss, identity_stationarity_residual, pss_partition, pss_rotation, pss_row_test,
    thurstone_report,
)

from conftest import solve_paper
from oracles import count_zero_pairs, orbit_distance_brute, random_orthogonal, random_pss, signed_permutations


def test_partition_of_pss_matrix():
    lam = np.array([[0.5, 0, 0], [0, 0.7, 0], [0.2, 0, 0], [0, -0.4, 0]])
    part = pss_partition(lam)
    assert part is not None and part.m == 2
    assert part.members(0) == [0, 2]


def test_printed_matrix_fails_with_dots():
    d = diagnose_pss(paper_matrices().A_printed)
    assert not d.ok
    dots = sorted(round(abs(v.dot), 3) for v in d.violations)
    assert dots == [0.138, 0.552]


def test_orthogonal_matrix_partition():
    a = paper_matrices().A_orthogonal
    part = pss_partition(a)
    assert part is not None and part.m == 3
    reps = part.representatives
    assert np.all(np.abs(reps @ reps.T - np.eye(3)) < 1e-15)


def test_rotation_of_pss_matrix_is_signed_permutation():
    lam = np.array([[0.5, 0, 0], [0, 0, 0.7], [0, -0.3, 0], [0.2, 0, 0]])
    t = pss_rotation(lam)
    assert np.allclose(np.abs(t).sum(axis=0), 1) and np.allclose(np.abs(t).sum(axis=1), 1)
    assert orbit_distance_brute(lam @ t, lam) < 1e-14


def test_rotation_on_orthogonal_paper_matrix():
    a = np.array(paper_matrices().A_orthogonal)
    lam = a @ pss_rotation(a)
    assert np.all((np.abs(lam) > 1e-10).sum(axis=1) == 1)
    np.testing.assert_allclose(np.abs(lam).max(axis=1), np.linalg.norm(a, axis=1), atol=1e-10)


def test_rotation_requires_pss():
    with pytest.raises(ValueError):
        pss_rotation(paper_matrices().A_printed)


def test_zero_rows_are_wildcards():
    lam = np.array([[0.5, 0, 0], [0, 0, 0], [0, 0.6, 0]])
    part = pss_partition(lam)
    assert part.assignments[1] is None


def test_too_many_clusters():
    a = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    d = diagnose_pss(a)
    assert not d.ok


def test_row_test():
    assert pss_row_test(np.array([[1.0, 5e-7], [0.0, 2.0]]))
    assert not pss_row_test(np.array([[1.0, 1e-6], [0.0, 2.0]]))


@given(st.integers(0, 2**32 - 1), st.integers(6, 12), st.integers(2, 4))
def test_round_trip(seed, p, k):
    r = np.random.default_rng(seed)
    lam0 = random_pss(r, p, k)
    a = lam0 @ random_orthogonal(r, k).T
    lam = a @ pss_rotation(a)
    assert orbit_distance_brute(lam, lam0) < 1e-8


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_existence_invariant_under_signed_permutation(seed, pss):
    r = np.random.default_rng(seed)
    if pss:
        a = random_pss(r, 8, 3) @ random_orthogonal(r, 3).T
    else:
        a = r.uniform(-1, 1, (8, 3))
    P = signed_permutations(3)[r.integers(48)]
    assert (pss_partition(a) is None) == (pss_partition(a @ P) is None)


def test_pss_rotations_unique_up_to_orbit(rng):
    lam0 = random_pss(rng, 9, 3)
    a = lam0 @ random_orthogonal(rng, 3).T
    t1 = pss_rotation(a)
    t2 = pss_rotation(a @ np.eye(3)[:, [2, 0, 1]] @ np.diag([1, -1, 1]))
    t2 = np.eye(3)[:, [2, 0, 1]] @ np.diag([1, -1, 1]) @ t2
    np.testing.assert_allclose(canonicalize(t1, a), canonicalize(t2, a), atol=1e-8)


@pytest.mark.slow
@pytest.mark.parametrize("name", ["varimax", "quartimax"])
def test_pss_rotation_dominates_stationary_points(name):
    a, spec, sset = solve_paper(name)
    q_pss = orthomax_value(a @ pss_rotation(a), spec)
    assert all(q_pss >= p.q_value - 1e-8 for p in sset.points)


def test_thurstone_examples():
    lam = np.kron(np.eye(3), np.ones((3, 1))) * 0.8
    r = thurstone_report(lam)
    assert r.gamma + r.delta == 9 and r.rule1_ok and r.rule2_ok
    assert r.satisfies_class(6, 3, 3)
    r = thurstone_report(np.full((6, 3), 0.5))
    assert (r.gamma, r.delta, r.rule1_ok) == (0, 0, False)


def test_thurstone_pair_counts():
    lam = np.array([
        [0.7, 0.0, 0.3],
        [0.0, 0.6, 0.05],
        [0.8, 0.02, 0.0],
        [0.0, 0.0, 0.9],
        [0.4, 0.5, 0.0],
        [0.09, 0.6, 0.7],
    ])
    r = thurstone_report(lam, 0.1)
    assert r.per_pair_counts == count_zero_pairs(lam, 0.1)
    assert r.per_pair_counts[(0, 1)] == (4, 1)
    assert r.gamma == 4 and r.delta == 1
    assert r.rule1_ok and r.rule2_ok


def test_identity_residual_examples(rng):
    spec = OrthomaxSpec.varimax(5, 3)
    a = rng.normal(size=(5, 3))
    a[:, [0, 2]] = 0.0
    assert identity_stationarity_residual(a, spec, 0, 2) == 0.0
    lam = random_pss(rng, 5, 3)
    for u in range(3):
        for v in range(3):
            if u != v:
                assert identity_stationarity_residual(lam, spec, u, v) == 0.0
    with pytest.raises(DimensionError):
        identity_stationarity_residual(lam, spec, 1, 1)


def test_identity_residual_thurstone_fixture():
    # every row has a zero, each column at least k zeros, but not perfectly simple
    a = np.array([
        [0.62, 0.41, 0.0],
        [0.55, 0.0, 0.38],
        [0.0, 0.71, 0.27],
        [0.48, 0.0, 0.0],
        [0.0, 0.66, 0.0],
        [0.0, 0.0, 0.59],
        [0.0, 0.35, 0.52],
    ])
    r = thurstone_report(a, 1e-12)
    assert r.rule1_ok and r.rule2_ok and r.gamma + r.delta < a.shape[0]
    spec = OrthomaxSpec.varimax(7, 3)
    f = [identity_stationarity_residual(a, spec, u, v) for u, v in ((0, 1), (0, 2), (1, 2))]
    assert max(abs(x) for x in f) > 1e-6


def test_identity_residual_matches_gradient(rng):
    from orthorot import orthomax_gradient

    a = rng.normal(size=(6, 3))
    spec = OrthomaxSpec.equamax(6, 3)
    g = orthomax_gradient(a, np.eye(3), spec)
    for u in range(3):
        for v in range(3):
            if u != v:
                assert identity_stationarity_residual(a, spec, u, v) == pytest.approx((g[v, u] - g[u, v]) / 4, abs=1e-12)


@given(st.integers(0, 2**32 - 1), st.sampled_from(NAMED_CRITERIA))
def test_identity_residual_antisymmetric(seed, name):
    r = np.random.default_rng(seed)
    a = r.uniform(-1, 1, (6, 3))
    spec = OrthomaxSpec.named(name, 6, 3)
    f01 = identity_stationarity_residual(a, spec, 0, 1)
    assert identity_stationarity_residual(a, spec, 1, 0) == pytest.approx(-f01, abs=1e-12)
    swapped = a[:, [1, 0, 2]]
    assert identity_stationarity_residual(swapped, spec, 0, 1) == pytest.approx(-f01, abs=1e-12)
