import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from orthorot import NAMED_CRITERIA, OrthomaxSpec, build_stationarity_system, orthomax_value
from orthorot.gpa import GpaOptions, gpa_rotate
from orthorot.homotopy import solve_all
from orthorot.numkernel import DimensionError

from conftest import solve_paper
from oracles import random_orthogonal


def test_fixed_point(rng):
    a = rng.uniform(-1, 1, (6, 2))
    spec = OrthomaxSpec.varimax(6, 2)
    sset = solve_all(build_stationarity_system(a, spec), 0, spec=spec)
    for p in sset.points:
        res = gpa_rotate(a, spec, p.T)
        assert res.iterations <= 1
        np.testing.assert_allclose(res.candidate.T, p.T, atol=1e-10)


@pytest.mark.slow
def test_paper_matrix_reaches_global():
    a, spec, sset = solve_paper("varimax")
    res = gpa_rotate(a, spec)
    assert res.converged
    assert res.candidate.q_value == pytest.approx(sset.global_point.q_value, abs=1e-8)


def test_k2_limits_are_stationary_points():
    r = np.random.default_rng(77)
    a = r.uniform(-1, 1, (7, 2))
    spec = OrthomaxSpec.quartimax(7, 2)
    pts = [p.T for p in solve_all(build_stationarity_system(a, spec), 3, spec=spec).points]
    for _ in range(100):
        res = gpa_rotate(a, spec, random_orthogonal(r, 2))
        assert res.converged
        assert min(np.linalg.norm(res.candidate.T - t) for t in pts) < 1e-6


@given(st.integers(0, 2**32 - 1), st.sampled_from(NAMED_CRITERIA), st.integers(2, 4))
def test_trace_properties(seed, name, k):
    r = np.random.default_rng(seed)
    p = int(r.integers(k + 1, 10))
    a = r.uniform(-1, 1, (p, k))
    spec = OrthomaxSpec.named(name, p, k)
    t0 = random_orthogonal(r, k)
    res = gpa_rotate(a, spec, t0, GpaOptions(keep_trace=True, max_iter=500))
    q = [orthomax_value(a @ t0, spec)] + [x[0] for x in res.trace]
    assert all(b >= a_ for a_, b in zip(q, q[1:]))
    assert all(x[3] < 1e-10 for x in res.trace)
    if res.converged:
        assert res.candidate.stat_residual < 1e-8
    assert res.candidate.q_value == pytest.approx(q[-1], abs=1e-10)


def test_max_iter_is_not_an_error(rng):
    a = rng.uniform(-1, 1, (8, 3))
    res = gpa_rotate(a, OrthomaxSpec.varimax(8, 3), random_orthogonal(rng, 3), GpaOptions(max_iter=1))
    assert not res.converged and res.iterations == 1


def test_input_checks(rng):
    a = rng.uniform(-1, 1, (5, 3))
    spec = OrthomaxSpec.varimax(5, 3)
    with pytest.raises(ValueError):
        gpa_rotate(a, spec, np.diag([1.0, 2.0, 1.0]))
    with pytest.raises(DimensionError):
        gpa_rotate(a, spec, np.eye(2))
