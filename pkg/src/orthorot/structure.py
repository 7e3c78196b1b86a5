"""Perfect simple structure (PSS) tests and Thurstone zero-pattern reports.

A rotation ``T`` making ``A T`` perfectly simple exists iff the nonzero rows
of ``A`` fall into at most ``k`` clusters that are parallel within a cluster
and mutually orthogonal across clusters. :func:`pss_rotation` builds that
rotation from the cluster directions.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .numkernel import DimensionError, as_mat, qr_orthonormal_extension

TOL_PAR = 1e-8
TOL_ORTH = 1e-8
TOL_ZERO = 1e-8


@dataclass(frozen=True)
class ClusterPartition:
    """Row clustering of a loading matrix.

    ``assignments[i]`` is the 0-based cluster of row ``i`` or ``None`` for a
    (near-)zero row, which is compatible with every cluster.
    """

    assignments: tuple
    representatives: np.ndarray  # m x k, unit rows

    @property
    def m(self):
        return self.representatives.shape[0]

    def members(self, j):
        return [i for i, c in enumerate(self.assignments) if c == j]


@dataclass(frozen=True)
class OrthogonalityViolation:
    cluster_a: int
    cluster_b: int
    row_a: int
    row_b: int
    dot: float
    cosine: float


@dataclass(frozen=True)
class PssDiagnosis:
    partition: object  # ClusterPartition or None
    n_clusters: int
    k: int
    violations: tuple = field(default=())

    @property
    def ok(self):
        return self.partition is not None


def diagnose_pss(a, tol_par=TOL_PAR, tol_orth=TOL_ORTH, tol_zero=TOL_ZERO):
    """Greedy clustering of the rows of `a` with full violation diagnostics."""
    a = as_mat(a, "A")
    p, k = a.shape
    norms = np.linalg.norm(a, axis=1)
    reps, first_rows, assignments = [], [], []
    violations = []
    for i in range(p):
        if norms[i] < tol_zero:
            assignments.append(None)
            continue
        u = a[i] / norms[i]
        label = None
        for j, r in enumerate(reps):
            if abs(u @ r) > 1.0 - tol_par:
                label = j
                break
        if label is None:
            label = len(reps)
            for j, r in enumerate(reps):
                cos = float(u @ r)
                if abs(cos) >= tol_orth:
                    violations.append(
                        OrthogonalityViolation(
                            j, label, first_rows[j], i, float(a[first_rows[j]] @ a[i]), cos
                        )
                    )
            reps.append(u)
            first_rows.append(i)
        assignments.append(label)
    m = len(reps)
    partition = None
    if m <= k and not violations:
        partition = ClusterPartition(
            tuple(assignments), np.array(reps).reshape(m, k) if m else np.zeros((0, k))
        )
    return PssDiagnosis(partition, m, k, tuple(violations))


def pss_partition(a, tol_par=TOL_PAR, tol_orth=TOL_ORTH, tol_zero=TOL_ZERO):
    """Cluster partition certifying a PSS rotation, or ``None`` if none exists."""
    return diagnose_pss(a, tol_par, tol_orth, tol_zero).partition


def pss_rotation(a, part=None):
    """Orthogonal ``T`` such that ``A T`` has a perfect simple structure.

    Column ``j`` of ``T`` is the unit direction of cluster ``j``; unused
    columns complete an orthonormal basis.
    """
    a = as_mat(a, "A")
    if part is None:
        part = pss_partition(a)
        if part is None:
            raise ValueError("A admits no perfect simple structure rotation")
    s = qr_orthonormal_extension(list(part.representatives), k=a.shape[1])
    t = np.ascontiguousarray(s.T)
    t.setflags(write=False)
    return t


def pss_row_test(lam, tol=1e-6):
    """True iff every row has at most one entry with ``|entry| >= tol``."""
    lam = np.asarray(lam, dtype=float)
    return bool(np.all((np.abs(lam) >= tol).sum(axis=1) <= 1))


@dataclass(frozen=True)
class ThurstoneReport:
    gamma: int
    delta: int
    rule1_ok: bool
    rule2_ok: bool
    per_pair_counts: dict  # (u, v) -> (zero_in_exactly_one, zero_in_both)

    def satisfies_class(self, gamma, delta, k):
        """Rules 1, 2 and the lower limits; the both-zero limit applies for k >= 4."""
        ok = self.rule1_ok and self.rule2_ok and self.gamma >= gamma
        if k >= 4:
            ok = ok and self.delta >= delta
        return ok


def thurstone_report(lam, zero_tol=0.1):
    lam = as_mat(lam, "Lambda")
    p, k = lam.shape
    z = np.abs(lam) < zero_tol
    counts = {}
    for u, v in combinations(range(k), 2):
        one = int(np.sum(z[:, u] ^ z[:, v]))
        both = int(np.sum(z[:, u] & z[:, v]))
        counts[(u, v)] = (one, both)
    gamma = min((c[0] for c in counts.values()), default=0)
    delta = min((c[1] for c in counts.values()), default=0)
    return ThurstoneReport(
        gamma=gamma,
        delta=delta,
        rule1_ok=bool(np.all(z.any(axis=1))),
        rule2_ok=bool(np.all(z.sum(axis=0) >= k)),
        per_pair_counts=counts,
    )


def identity_stationarity_residual(a, spec, u, v):
    """Antisymmetric part of ``dQ/dT`` at ``T = I`` for the column pair (u, v).

    Equals ``sum_i a_iu a_iv ((a_iu^2 - a_iv^2) - (w/p)(||a_u||^2 - ||a_v||^2))``,
    i.e. ``(G_vu - G_uv) / 4`` with ``G = dQ/dT`` at the identity. All pairs
    vanish iff the identity is a stationary rotation.
    """
    a = np.asarray(a, dtype=float)
    k = a.shape[1]
    if not (0 <= u < k and 0 <= v < k) or u == v:
        raise DimensionError(f"invalid column pair ({u}, {v}) for k={k}")
    au, av = a[:, u], a[:, v]
    diff = (au @ au) - (av @ av)
    return float(np.sum(au * av * ((au * au - av * av) - spec.kappa * diff)))
