"""Second-order classification of constrained stationary rotations.

The Lagrangian is ``Phi(T, mu) = Q(AT) + sum_c mu_c g_c(T)`` with the
orthogonality constraints ``g_jl = (T^T T - I)_jl`` for ``j <= l``. Variables
are the entries of ``T`` in row-major order.
"""

from dataclasses import dataclass, field

import numpy as np

from .criterion import RotationCandidate, make_candidate, orthomax_gradient
from .numkernel import DimensionError, det, solve_least_squares

DET_TOL = 1e-12
MULTIPLIER_TOL = 1e-6
# leading constraint block counts as singular below this relative singular value
PIVOT_TOL = 1e-6

MAX, MIN, INDETERMINATE = "max", "min", "indeterminate"


class NotStationaryError(ValueError):
    """Raised when multipliers cannot make the Lagrangian gradient vanish."""


@dataclass(frozen=True)
class ClassifiedPoint:
    candidate: RotationCandidate
    multipliers: np.ndarray
    label: str
    determinant_trail: tuple  # ((b, det H^b), ...)
    multiplier_residual: float
    variable_order: tuple = field(default=())


def constraint_pairs(k):
    return [(j, l) for j in range(k) for l in range(j, k)]


def constraint_jacobian(t):
    """``B[c, u*k + v] = d g_c / d t_uv`` for constraints in ``constraint_pairs`` order."""
    t = np.asarray(t, dtype=float)
    k = t.shape[0]
    pairs = constraint_pairs(k)
    B = np.zeros((len(pairs), k * k))
    for c, (j, l) in enumerate(pairs):
        for u in range(k):
            B[c, u * k + j] += t[u, l]
            B[c, u * k + l] += t[u, j]
    return B


def _check_shapes(a, spec, t):
    if a.shape != (spec.p, spec.k) or t.shape != (spec.k, spec.k):
        raise DimensionError(f"A {a.shape} / T {t.shape} do not match spec ({spec.p}, {spec.k})")


def recover_multipliers(a, spec, t):
    """Least-squares multipliers and the residual ``||grad Q + B^T mu||``."""
    a = np.asarray(a, dtype=float)
    t = np.asarray(t, dtype=float)
    _check_shapes(a, spec, t)
    g = orthomax_gradient(a, t, spec).ravel()
    B = constraint_jacobian(t)
    mu = solve_least_squares(B.T, -g)
    return mu, float(np.linalg.norm(g + B.T @ mu))


def criterion_hessian(a, spec, t):
    """Hessian of ``Q(AT)`` in the row-major entries of ``T``.

    Columns of ``T`` do not interact, so the matrix is block diagonal after
    grouping variables by column.
    """
    a = np.asarray(a, dtype=float)
    t = np.asarray(t, dtype=float)
    k = t.shape[0]
    lam = a @ t
    n = (lam * lam).sum(axis=0)
    c = a.T @ lam  # c[u, v] = sum_i a_iu L_iv
    ata = a.T @ a
    H = np.zeros((k * k, k * k))
    for v in range(k):
        blk = 12.0 * (a * lam[:, [v]] ** 2).T @ a
        blk -= spec.kappa * (8.0 * np.outer(c[:, v], c[:, v]) + 4.0 * n[v] * ata)
        idx = np.arange(k) * k + v
        H[np.ix_(idx, idx)] = 0.5 * (blk + blk.T)  # exact symmetry
    return H


def lagrangian_hessian(a, spec, t, mu):
    t = np.asarray(t, dtype=float)
    k = t.shape[0]
    H = criterion_hessian(a, spec, t)
    for c, (j, l) in enumerate(constraint_pairs(k)):
        for u in range(k):
            H[u * k + j, u * k + l] += mu[c]
            H[u * k + l, u * k + j] += mu[c]
    return H


def _pivot_order(B):
    """Variable order whose first m columns of ``B`` are well conditioned."""
    m, n = B.shape
    lead = np.linalg.svd(B[:, :m], compute_uv=False)
    if m == 0 or lead[-1] > PIVOT_TOL * max(lead[0], 1.0):
        return np.arange(n)
    # greedy column-pivoted Gram-Schmidt
    R = B.astype(float).copy()
    chosen = []
    for _ in range(m):
        norms = np.linalg.norm(R, axis=0)
        norms[chosen] = -1.0
        j = int(np.argmax(norms))
        chosen.append(j)
        q = R[:, j] / norms[j]
        R -= np.outer(q, q @ R)
    rest = [j for j in range(n) if j not in chosen]
    return np.array(sorted(chosen) + rest)


def _bordered(L, B, b):
    m = B.shape[0]
    H = np.zeros((b + m, b + m))
    H[:b, :b] = L[:b, :b]
    H[:b, b:] = B[:, :b].T
    H[b:, :b] = B[:, :b]
    return H


def bordered_hessian(a, spec, t, mu, b, order=None):
    """The b-th bordered Hessian ``[[L_b, B_b^T], [B_b, 0]]``.

    ``order`` optionally permutes the variables before the leading blocks are
    taken; by default the row-major order is used.
    """
    k = spec.k
    m = k * (k + 1) // 2
    if not (m + 1 <= b <= k * k):
        raise IndexError(f"b={b} outside {m + 1}..{k * k}")
    L = lagrangian_hessian(a, spec, t, mu)
    B = constraint_jacobian(t)
    if order is not None:
        order = np.asarray(order)
        L = L[np.ix_(order, order)]
        B = B[:, order]
    return _bordered(L, B, b)


def label_from_trail(trail, m):
    if not trail or any(abs(d) < DET_TOL for _, d in trail):
        return INDETERMINATE
    if all((-1) ** b * d > 0 for b, d in trail):
        return MAX
    if all((-1) ** m * d > 0 for _, d in trail):
        return MIN
    return INDETERMINATE


def classify_point(a, spec, t, multiplier_tol=MULTIPLIER_TOL):
    a = np.asarray(a, dtype=float)
    t = np.asarray(t, dtype=float)
    cand = make_candidate(a, t, spec)
    mu, res = recover_multipliers(a, spec, t)
    if res > multiplier_tol:
        raise NotStationaryError(f"multiplier residual {res:.3g} exceeds {multiplier_tol:g}")
    k = spec.k
    m = k * (k + 1) // 2
    L = lagrangian_hessian(a, spec, t, mu)
    B = constraint_jacobian(t)
    order = _pivot_order(B)
    L = L[np.ix_(order, order)]
    B = B[:, order]
    trail = tuple((b, det(_bordered(L, B, b))) for b in range(m + 1, k * k + 1))
    return ClassifiedPoint(cand, mu, label_from_trail(trail, m), trail, res, tuple(int(i) for i in order))


def classify_set(stationary_set):
    """Classify one representative per orbit class; returns labels per class."""
    out = []
    for members in stationary_set.classes:
        pt = stationary_set.points[members[0]]
        out.append(classify_point(stationary_set.A, stationary_set.spec, pt.T))
    return out
