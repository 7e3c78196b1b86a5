"""Orthomax criterion, its closed-form gradient and the stationarity residual.

The orthomax family is

    Q_w(L) = sum_ij L_ij^4 - (w / p) * sum_j (sum_i L_ij^2)^2,

with ``L = A T`` for an orthogonal ``T``. A feasible ``T`` is a constrained
stationary point iff ``T^T dQ/dT`` is symmetric.
"""

from dataclasses import dataclass, field

import numpy as np

from .numkernel import DimensionError, as_mat, orthogonality_residual

NAMED_CRITERIA = ("quartimax", "varimax", "equamax", "parsimax")


@dataclass(frozen=True)
class OrthomaxSpec:
    omega: float
    p: int
    k: int
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        if self.p < 1 or self.k < 1:
            raise ValueError("p and k must be positive")
        if not (0.0 <= self.omega <= self.p):
            raise ValueError(f"omega={self.omega} outside [0, p={self.p}]")

    @property
    def kappa(self):
        """Coefficient ``omega / p`` of the column-variance term."""
        return self.omega / self.p

    @classmethod
    def quartimax(cls, p, k):
        return cls(0.0, p, k, "quartimax")

    @classmethod
    def varimax(cls, p, k):
        return cls(1.0, p, k, "varimax")

    @classmethod
    def equamax(cls, p, k):
        return cls(k / 2.0, p, k, "equamax")

    @classmethod
    def parsimax(cls, p, k):
        if p + k - 2 == 0:
            return cls(0.0, p, k, "parsimax")
        return cls(p * (k - 1) / (p + k - 2), p, k, "parsimax")

    @classmethod
    def named(cls, name, p, k):
        try:
            ctor = getattr(cls, name)
        except AttributeError:
            raise ValueError(f"unknown criterion {name!r}") from None
        if name not in NAMED_CRITERIA:
            raise ValueError(f"unknown criterion {name!r}")
        return ctor(p, k)


def _check(lam, spec):
    if lam.shape != (spec.p, spec.k):
        raise DimensionError(f"expected {spec.p}x{spec.k} loadings, got {lam.shape}")


def orthomax_value(lam, spec):
    lam = np.asarray(lam, dtype=float)
    _check(lam, spec)
    sq = lam * lam
    col = sq.sum(axis=0)
    return float((sq * sq).sum() - spec.kappa * (col * col).sum())


def orthomax_gradient(a, t, spec):
    """Gradient of ``Q_w(A T)`` with respect to ``T``.

    Entry ``(u, v)`` is ``4 sum_i a_iu L_iv (L_iv^2 - (w/p) ||L_v||^2)``.
    """
    a = np.asarray(a, dtype=float)
    t = np.asarray(t, dtype=float)
    _check(a, spec)
    if t.shape != (spec.k, spec.k):
        raise DimensionError(f"expected {spec.k}x{spec.k} T, got {t.shape}")
    lam = a @ t
    col = (lam * lam).sum(axis=0)
    return 4.0 * a.T @ (lam * (lam * lam - spec.kappa * col))


def stationarity_matrix(a, t, spec):
    """``T^T dQ/dT``; symmetric exactly at constrained stationary points."""
    return np.asarray(t, dtype=float).T @ orthomax_gradient(a, t, spec)


def stationarity_residual(a, t, spec):
    m = stationarity_matrix(a, t, spec)
    return float(np.linalg.norm(m - m.T))


@dataclass(frozen=True)
class RotationCandidate:
    T: np.ndarray
    Lambda: np.ndarray
    q_value: float
    orth_residual: float
    stat_residual: float
    tol_feas: float = 1e-8

    @property
    def feasible(self):
        return self.orth_residual < self.tol_feas


def make_candidate(a, t, spec, tol_feas=1e-8):
    a = as_mat(a, "A")
    t = as_mat(t, "T")
    _check(a, spec)
    if t.shape != (spec.k, spec.k):
        raise DimensionError(f"expected {spec.k}x{spec.k} T, got {t.shape}")
    lam = as_mat(a @ t, "Lambda")
    return RotationCandidate(
        T=t,
        Lambda=lam,
        q_value=orthomax_value(lam, spec),
        orth_residual=orthogonality_residual(t),
        stat_residual=stationarity_residual(a, t, spec),
        tol_feas=tol_feas,
    )
