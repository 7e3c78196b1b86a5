"""Dense matrix primitives shared by the rest of the package.

Matrices are plain ``numpy`` float arrays. :func:`as_mat` validates shape and
finiteness and returns a read-only copy, so values handed between modules are
never mutated in place.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class Tolerances:
    """Module-level numerical tolerances (override via :data:`TOL`)."""

    orthogonality: float = 1e-10
    rank: float = 1e-12


TOL = Tolerances()


class DimensionError(ValueError):
    pass


class RankError(ValueError):
    pass


def as_mat(x, name="matrix"):
    """Return a validated, read-only 2-D float64 copy of `x`."""
    arr = np.array(x, dtype=float, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def as_cvec(x, name="vector"):
    arr = np.array(x, dtype=complex, copy=True).ravel()
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def _frozen(arr):
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def matmul(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return _frozen(a @ b)


def orthogonality_residual(t):
    """Frobenius norm of ``T^T T - I``."""
    t = np.asarray(t, dtype=float)
    return float(np.linalg.norm(t.T @ t - np.eye(t.shape[1])))


def qr_orthonormal_extension(vectors, k=None, rank_tol=None):
    """Extend `m` pairwise-orthogonal vectors to an orthogonal ``k x k`` matrix.

    The first `m` rows of the result are the normalized inputs; the remaining
    rows complete an orthonormal basis (Gram-Schmidt against the standard
    basis, taking the best-conditioned candidates first).
    """
    rank_tol = TOL.rank if rank_tol is None else rank_tol
    vecs = [np.asarray(v, dtype=float).ravel() for v in vectors]
    if k is None:
        if not vecs:
            raise DimensionError("k is required when no vectors are given")
        k = vecs[0].size
    if len(vecs) > k:
        raise RankError(f"{len(vecs)} vectors cannot be orthonormal in dimension {k}")
    rows = []
    for v in vecs:
        if v.size != k:
            raise DimensionError(f"vector of length {v.size} in dimension {k}")
        nrm = np.linalg.norm(v)
        if nrm < rank_tol:
            raise RankError("zero vector among inputs")
        u = v / nrm
        for r in rows:
            if abs(r @ u) > 1e-8:
                raise RankError(f"inputs are not orthogonal (|cos| = {abs(r @ u):.3g})")
        rows.append(u)
    while len(rows) < k:
        best, best_norm = None, -1.0
        for e in np.eye(k):
            w = e.copy()
            for _ in range(2):  # re-orthogonalize once for stability
                for r in rows:
                    w -= (r @ w) * r
            nw = np.linalg.norm(w)
            if nw > best_norm:
                best, best_norm = w, nw
        if best_norm < rank_tol:
            raise RankError("could not extend basis")
        rows.append(best / best_norm)
    return _frozen(np.vstack(rows))


def svd_polar_factor(m, rank_tol=None):
    """Nearest orthogonal matrix to `m` in Frobenius norm, ``U V^T``."""
    rank_tol = TOL.rank if rank_tol is None else rank_tol
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"polar factor needs a square matrix, got {m.shape}")
    u, s, vt = np.linalg.svd(m)
    if s[-1] <= rank_tol * max(1.0, s[0]):
        raise RankError("matrix is singular; polar factor is not unique")
    return _frozen(u @ vt)


def det(m):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"determinant needs a square matrix, got {m.shape}")
    return float(np.linalg.det(m))


def solve_least_squares(a, b):
    """Minimum-norm least-squares solution of ``a x = b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    if a.ndim != 2 or a.shape[0] != b.size:
        raise DimensionError(f"incompatible shapes {a.shape} and {b.shape}")
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    return x
