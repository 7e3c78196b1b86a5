"""Gradient projection rotation (ascent on the orthogonal group).

Each iteration moves ``T`` along the gradient projected onto the tangent space
of the orthogonal group, then maps back with the polar factor. The step
length doubles after an accepted step and halves until ``Q`` does not drop.
"""

from dataclasses import dataclass, field

import numpy as np

from .criterion import RotationCandidate, make_candidate, orthomax_gradient, orthomax_value
from .numkernel import DimensionError, orthogonality_residual, svd_polar_factor


REORTH_TOL = 1e-13


@dataclass
class GpaOptions:
    tol_stop: float = 1e-8
    max_iter: int = 5000
    alpha0: float = 1.0
    max_halvings: int = 30
    keep_trace: bool = False


@dataclass
class GpaResult:
    candidate: RotationCandidate
    iterations: int
    converged: bool
    stalled: bool = False
    trace: list = field(default_factory=list)  # (q, alpha, stat_residual, orth_residual) per accepted step; q accumulates exact increments


def _projected_gradient(t, g):
    m = t.T @ g
    return g - t @ (0.5 * (m + m.T))


def _polar_step(t, gp, alpha):
    """Increment ``D`` with ``T + D = polar(T + alpha * Gp)``.

    For orthogonal ``T`` the target equals ``T polar(I + X)`` with the skew
    matrix ``X = alpha T^T Gp``, and ``polar(I + X) = (I + X)(I + X^T X)^(-1/2)``.
    Forming ``D`` this way keeps full relative accuracy in the increment,
    which the acceptance test depends on near convergence.
    """
    x = alpha * (t.T @ gp)
    x = 0.5 * (x - x.T)
    w, v = np.linalg.eigh(x.T @ x)
    w = np.maximum(w, 0.0)
    r = np.sqrt(1.0 + w)
    c = (v * (-w / (r * (1.0 + r)))) @ v.T  # (I + X^T X)^(-1/2) - I
    return t @ (x + (np.eye(len(x)) + x) @ c)


def _q_increase(a, t_old, t_new, kappa):
    """``Q(A T_new) - Q(A T_old)`` evaluated from differences.

    Near a maximizer the increase is far below the rounding error of ``Q``
    itself, so subtracting two criterion values cannot decide acceptance.
    """
    lam0 = a @ t_old
    d = a @ (t_new - t_old)
    s = 2.0 * lam0 + d
    dsq = d * s  # L_new^2 - L_old^2
    ssq = lam0 * lam0 + (lam0 + d) ** 2
    dcol = dsq.sum(axis=0)
    scol = ssq.sum(axis=0)
    return float((dsq * ssq).sum() - kappa * (dcol * scol).sum())


def _stat(t, g):
    m = t.T @ g
    return float(np.linalg.norm(m - m.T))


def gpa_rotate(a, spec, t0=None, opts=None):
    """Maximize ``Q(AT)`` over orthogonal ``T`` starting from ``t0`` (default identity)."""
    opts = GpaOptions() if opts is None else opts
    a = np.asarray(a, dtype=float)
    k = spec.k
    t = np.eye(k) if t0 is None else np.array(t0, dtype=float)
    if t.shape != (k, k):
        raise DimensionError(f"T0 must be {k}x{k}, got {t.shape}")
    if orthogonality_residual(t) > 1e-8:
        raise ValueError("starting rotation is not orthogonal")

    q = orthomax_value(a @ t, spec)
    g = orthomax_gradient(a, t, spec)
    alpha = opts.alpha0
    trace = []
    it = 0
    converged = stalled = False
    while True:
        if _stat(t, g) < opts.tol_stop:
            converged = True
            break
        if it >= opts.max_iter:
            break
        gp = _projected_gradient(t, g)
        for _ in range(opts.max_halvings + 1):
            t_new = t + _polar_step(t, gp, alpha)
            dq = _q_increase(a, t, t_new, spec.kappa)
            if dq >= 0.0:
                break
            alpha *= 0.5
        else:
            stalled = True
            break
        it += 1
        t, q = t_new, q + dq
        if orthogonality_residual(t) > REORTH_TOL:
            t = svd_polar_factor(t)
        g = orthomax_gradient(a, t, spec)
        if opts.keep_trace:
            trace.append((q, alpha, _stat(t, g), orthogonality_residual(t)))
        alpha *= 2.0
    return GpaResult(make_candidate(a, t, spec), it, converged, stalled, trace)
