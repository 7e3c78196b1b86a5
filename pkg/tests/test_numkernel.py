import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from orthorot.numkernel import (
    TOL, DimensionError, RankError, as_mat, det, matmul, orthogonality_residual,
    qr_orthonormal_extension, solve_least_squares, svd_polar_factor,
)

from oracles import det_cofactor, matmul_loops, random_orthogonal

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_default_tolerances():
    assert TOL.orthogonality == 1e-10
    assert TOL.rank == 1e-12


def test_matmul_identity_and_scalar():
    m = np.arange(9.0).reshape(3, 3)
    assert np.array_equal(matmul(np.eye(3), m), m)
    assert matmul([[2.0]], [[3.0]])[0, 0] == 6.0


def test_matmul_matches_loops(rng):
    a, b = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    np.testing.assert_allclose(matmul(a, b), matmul_loops(a, b), rtol=1e-14, atol=1e-14)


def test_matmul_shape_error():
    with pytest.raises(DimensionError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_values_are_read_only():
    m = matmul(np.eye(2), np.eye(2))
    with pytest.raises(ValueError):
        m[0, 0] = 5.0
    src = np.eye(2)
    v = as_mat(src)
    src[0, 0] = 7.0
    assert v[0, 0] == 1.0


def test_as_mat_rejects_nonfinite():
    with pytest.raises(ValueError):
        as_mat([[1.0, np.nan]])


def test_qr_extension_single_vector():
    o = qr_orthonormal_extension([np.array([1.0, 0.0])])
    np.testing.assert_allclose(np.abs(o), np.eye(2), atol=1e-15)


def test_qr_extension_forced_third_row():
    s = np.sqrt(0.5)
    o = qr_orthonormal_extension([[s, s, 0.0], [s, -s, 0.0]])
    np.testing.assert_allclose(np.abs(o[2]), [0, 0, 1], atol=1e-12)


def test_qr_extension_random_pair(rng):
    q = random_orthogonal(rng, 3)
    o = qr_orthonormal_extension([q[0] * 2.5, q[1] * 0.3])
    assert np.linalg.norm(o @ o.T - np.eye(3)) < 1e-12
    np.testing.assert_allclose(o[:2], q[:2], atol=1e-12)


def test_qr_extension_errors():
    with pytest.raises(RankError):
        qr_orthonormal_extension([[1.0, 0.0], [1.0, 1.0]])
    with pytest.raises(RankError):
        qr_orthonormal_extension([[0.0, 0.0]])
    with pytest.raises(RankError):
        qr_orthonormal_extension([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])


def test_polar_factor_examples(rng):
    q = random_orthogonal(rng, 3)
    np.testing.assert_allclose(svd_polar_factor(q), q, atol=1e-12)
    np.testing.assert_allclose(svd_polar_factor(np.diag([2.0, 0.5])), np.eye(2), atol=1e-15)
    with pytest.raises(RankError):
        svd_polar_factor(np.diag([1.0, 0.0]))


def test_polar_factor_maximizes_trace(rng):
    m = rng.normal(size=(3, 3))
    o = svd_polar_factor(m)
    assert orthogonality_residual(o) < 1e-12
    best = np.trace(o.T @ m)
    samples = [random_orthogonal(rng, 3) for _ in range(10**4)]
    assert max(np.trace(s.T @ m) for s in samples) <= best + 1e-12


def test_det_examples(rng):
    assert det(np.eye(4)) == pytest.approx(1.0)
    for _ in range(20):
        a, b, c, d = rng.normal(size=4)
        assert det([[a, b], [c, d]]) == pytest.approx(a * d - b * c, rel=1e-12, abs=1e-14)
    m = rng.normal(size=(5, 5))
    assert det(m) == pytest.approx(det_cofactor(m), rel=1e-10)


def test_least_squares_consistent(rng):
    a = rng.normal(size=(4, 4))
    x = rng.normal(size=4)
    sol = solve_least_squares(a, a @ x)
    assert np.linalg.norm(a @ sol - a @ x) < 1e-10


@given(arrays(float, (3, 3), elements=finite))
def test_polar_factor_is_orthogonal(m):
    s = np.linalg.svd(m, compute_uv=False)
    assume(s[-1] > 1e-8 * max(1.0, s[0]))
    assert orthogonality_residual(svd_polar_factor(m)) < 1e-12


@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.data())
def test_qr_extension_property(seed, k, data):
    rng = np.random.default_rng(seed)
    q = random_orthogonal(rng, k)
    m = data.draw(st.integers(0, k))
    scales = rng.uniform(0.1, 3.0, m)
    o = qr_orthonormal_extension([q[i] * scales[i] for i in range(m)], k=k)
    assert np.linalg.norm(o @ o.T - np.eye(k)) < 1e-12
    np.testing.assert_allclose(o[:m], q[:m], atol=1e-12)
