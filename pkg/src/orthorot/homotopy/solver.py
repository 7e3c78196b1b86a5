"""Enumerate all stationary rotations by total-degree homotopy continuation.

Every isolated complex solution of the stationarity system is reached by one
of the ``prod(d_i)`` paths of

    H(x, tau) = (1 - tau) * gamma * G(x) + tau * F(x),   G_i = x_i^{d_i} - 1,

for a generic complex ``gamma``. Paths are tracked in homogeneous coordinates
on a random affine patch, so paths heading to infinity stay bounded and are
recognized by a vanishing homogenizing coordinate.
"""

import itertools
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..criterion import OrthomaxSpec, make_candidate, orthomax_value
from ._backend import BACKEND, get_kernels

log = logging.getLogger(__name__)

CONVERGED, DIVERGED, TRUNCATED = "converged", "diverged", "truncated"


class PathBudgetError(RuntimeError):
    pass


@dataclass
class SolverOptions:
    h_init: float = 0.02
    h_max: float = 0.1
    h_min: float = 1e-13
    max_steps: int = 20000
    corr_iters: int = 3
    grow_after: int = 5
    corr_tol: float = 1e-6
    jump_tol: float = 0.1
    tau_end: float = 1.0 - 1e-6
    end_iters: int = 6
    polish_iters: int = 40
    tol_end: float = 1e-10
    imag_tol: float = 1e-8
    feas_tol: float = 1e-8
    stat_tol: float = 1e-8
    dedup_tol: float = 1e-6
    rank_tol: float = 1e-8
    # unconverged endpoints with |x0| / |z|_inf below this are heading to infinity
    infinity_tol: float = 1e-2
    retrack_rounds: int = 2
    max_paths: int = 200_000
    threads: int = 1
    structured: bool = True
    backend: object = None
    keep_paths: bool = True


@dataclass
class PathResult:
    index: int
    endpoint: np.ndarray
    status: str
    final_residual: float
    jacobian_min_singular: float
    steps: int = 0
    retracked: int = 0


@dataclass
class StationarySet:
    points: list
    classes: list  # lists of indices into points, one list per orbit class
    continuum_flag: bool
    n_paths_tracked: int
    n_real: int
    spec: OrthomaxSpec = None
    A: np.ndarray = None
    continuum_points: list = field(default_factory=list)
    path_results: list = field(default_factory=list)
    n_retracked: int = 0
    backend: str = BACKEND

    @property
    def class_q(self):
        return [self.points[c[0]].q_value for c in self.classes]

    @property
    def global_class(self):
        if not self.classes:
            return None
        return int(np.argmax(self.class_q))

    @property
    def global_point(self):
        g = self.global_class
        return None if g is None else self.points[self.classes[g][0]]

    def status_counts(self):
        out = {CONVERGED: 0, DIVERGED: 0, TRUNCATED: 0}
        for r in self.path_results:
            out[r.status] += 1
        return out

    def path_report(self):
        """JSON-serializable per-path diagnostics."""
        rows = []
        for r in self.path_results:
            d = asdict(r)
            d["endpoint"] = {"re": r.endpoint.real.tolist(), "im": r.endpoint.imag.tolist()}
            rows.append(d)
        return {"n_paths": self.n_paths_tracked, "counts": self.status_counts(), "paths": rows}

    def dump_paths(self, path):
        with open(path, "w") as fh:
            json.dump(self.path_report(), fh, indent=1, sort_keys=True)


def kernel_spec(system, structured=True):
    """Flatten a PolySystem into the arrays consumed by the kernels."""
    term_poly, term_coef, term_start, term_deg, fac_var, fac_exp = [], [], [0], [], [], []
    for r, poly in enumerate(system.polys):
        for exps, c in poly.terms:
            term_poly.append(r)
            term_coef.append(complex(c))
            term_deg.append(sum(exps))
            for v, e in enumerate(exps):
                if e:
                    fac_var.append(v)
                    fac_exp.append(e)
            term_start.append(len(fac_var))
    use_struct = structured and system.source is not None
    if use_struct:
        A, kappa = system.source
        p, k = A.shape
    else:
        A, kappa, p, k = np.zeros((1, 1)), 0.0, 0, 0
    return {
        "mode": 1 if use_struct else 0,
        "n": system.nvars,
        "term_poly": np.array(term_poly, dtype=np.intc).reshape(-1),
        "term_coef": np.array(term_coef, dtype=complex).reshape(-1),
        "term_start": np.array(term_start, dtype=np.intc),
        "term_deg": np.array(term_deg, dtype=np.intc).reshape(-1),
        "fac_var": np.array(fac_var, dtype=np.intc).reshape(-1),
        "fac_exp": np.array(fac_exp, dtype=np.intc).reshape(-1),
        "A": np.ascontiguousarray(A, dtype=float),
        "p": int(p),
        "k": int(k),
        "kappa": float(kappa),
        "deg": np.array(system.start_degrees, dtype=np.intc),
    }


def start_points(degrees):
    """All roots of ``x_i^{d_i} = 1`` in lexicographic multi-index order."""
    roots = [np.exp(2j * np.pi * np.arange(d) / d) for d in degrees]
    return np.array(list(itertools.product(*roots)), dtype=complex).reshape(-1, len(degrees))


def _orbit_ops(k):
    """All k! * 2^k signed permutations as (perm, signs) pairs."""
    ops = []
    for perm in itertools.permutations(range(k)):
        for signs in itertools.product((1.0, -1.0), repeat=k):
            ops.append((np.array(perm), np.array(signs)))
    return ops


def canonicalize(t, a=None, return_op=False):
    """Canonical representative of ``T`` under column permutations and sign flips.

    Columns are signed so the largest-magnitude entry of each column of ``T``
    is positive, then sorted by descending column norm of ``|A T|`` with a
    lexicographic tie-break on entries rounded to 6 decimals.
    """
    t = np.asarray(t, dtype=float)
    k = t.shape[1]
    signs = np.ones(k)
    for j in range(k):
        col = np.abs(t[:, j])
        i = int(np.flatnonzero(col >= col.max() - 1e-12)[0])
        if t[i, j] < 0:
            signs[j] = -1.0
    ts = t * signs
    lam = ts if a is None else np.asarray(a, dtype=float) @ ts
    keys = []
    for j in range(k):
        col = np.abs(lam[:, j])
        keys.append((-round(float(np.sqrt(col @ col)), 6), tuple(-np.round(col, 6))))
    perm = sorted(range(k), key=lambda j: keys[j])
    out = ts[:, perm]
    if return_op:
        return out, (np.array(perm), signs[perm])
    return out


def orbit_min_distance(t1, t2):
    """``min ||T1 - T2 P D||_F`` over signed permutations."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    best = np.inf
    for perm, signs in _orbit_ops(t1.shape[1]):
        d = np.linalg.norm(t1 - t2[:, perm] * signs)
        best = min(best, d)
    return float(best)


@dataclass
class PolishResult:
    point: np.ndarray
    residual: float
    iterations: int
    ok: bool
    min_singular: float


def _affine_eval(spec, kern, x):
    F, J = kern.eval_affine(spec, np.atleast_2d(x))
    return F, J


def newton_polish(system, point, max_iter=20, tol=1e-12, rank_tol=1e-8, backend=None, spec=None):
    """Real Newton refinement. Fails (``ok=False``) on a rank-deficient Jacobian."""
    kern = get_kernels(backend)
    spec = kernel_spec(system) if spec is None else spec
    x = np.array(point, dtype=float).ravel()
    smin = np.nan
    for it in range(max_iter + 1):
        F, J = _affine_eval(spec, kern, x)
        F, J = F[0].real, J[0].real
        res = float(np.max(np.abs(F))) if F.size else 0.0
        s = np.linalg.svd(J, compute_uv=False)
        smin = float(s[-1] / max(s[0], 1.0)) if s.size else 1.0
        if res < tol:
            return PolishResult(x, res, it, smin >= rank_tol, smin)
        if it == max_iter or smin < rank_tol:
            break
        x = x - np.linalg.solve(J, F)
    return PolishResult(x, res, it, False, smin)


def _pseudo_newton(spec, kern, x, iters, tol, real=False):
    """Gauss-Newton with a minimum-norm step; handles rank-deficient Jacobians."""
    x = np.array(x, dtype=float if real else complex)
    for _ in range(iters):
        F, J = _affine_eval(spec, kern, x)
        F, J = F[0], J[0]
        if real:
            F, J = F.real, J.real
        if np.max(np.abs(F), initial=0.0) < tol:
            break
        dx, *_ = np.linalg.lstsq(J, -F, rcond=1e-12)
        x = x + dx
        if np.max(np.abs(dx), initial=0.0) < 1e-15 * (1 + np.max(np.abs(x))):
            break
    F, J = _affine_eval(spec, kern, x)
    return x, F[0], J[0]


def _polish_batch(spec, kern, X, iters):
    """Batched complex Newton with least-squares steps."""
    X = np.array(X, dtype=complex)
    for _ in range(iters):
        F, J = _affine_eval(spec, kern, X)
        res = np.max(np.abs(F), axis=1)
        todo = np.flatnonzero(res > 1e-14 * (1 + np.minimum(np.max(np.abs(X), axis=1), 1e50) ** 4))
        if todo.size == 0:
            break
        try:
            dx = np.linalg.solve(J[todo], -F[todo][..., None])[..., 0]
        except np.linalg.LinAlgError:
            dx = np.stack([np.linalg.lstsq(J[i], -F[i], rcond=1e-12)[0] for i in todo])
        bad = ~np.all(np.isfinite(dx), axis=1)
        for j in np.flatnonzero(bad):
            dx[j] = np.linalg.lstsq(J[todo[j]], -F[todo[j]], rcond=1e-12)[0]
        X[todo] += dx
    F, J = _affine_eval(spec, kern, X)
    return X, F, J


def _spec_from_system(system, spec):
    if spec is not None:
        return spec
    if system.source is None:
        return None
    A, kappa = system.source
    p, k = A.shape
    return OrthomaxSpec(min(kappa * p, float(p)), p, k)


def solve_all(system, seed=0, opts=None, spec=None):
    """Enumerate the real stationary rotations of an orthomax stationarity system."""
    opts = SolverOptions() if opts is None else opts
    n = system.nvars
    if n != len(system.polys):
        raise ValueError("non-square system")
    nb = system.bezout_number
    if nb > opts.max_paths:
        raise PathBudgetError(f"Bezout number {nb} exceeds path budget {opts.max_paths}")
    kern = get_kernels(opts.backend)
    kspec = kernel_spec(system, opts.structured)
    spec = _spec_from_system(system, spec)
    A = None if system.source is None else system.source[0]

    rng = np.random.default_rng(seed)
    gamma = np.exp(2j * np.pi * rng.random())
    patch = rng.normal(size=n + 1) + 1j * rng.normal(size=n + 1)
    patch /= np.linalg.norm(patch)

    x_start = start_points(system.start_degrees)
    z_start = np.concatenate([np.ones((nb, 1), dtype=complex), x_start], axis=1)
    z_start = z_start / (z_start @ patch)[:, None]

    track_args = dict(
        tau_end=opts.tau_end, h_init=opts.h_init, h_max=opts.h_max, h_min=opts.h_min,
        max_steps=opts.max_steps, corr_iters=opts.corr_iters, corr_tol=opts.corr_tol,
        jump_tol=opts.jump_tol, end_iters=opts.end_iters,
        grow_after=opts.grow_after, threads=max(1, int(opts.threads)),
    )
    Z, _, kstat, steps = kern.track_paths(kspec, z_start, gamma, patch, **track_args)
    retracked = np.zeros(nb, dtype=int)
    results = _classify_endpoints(kspec, kern, Z, kstat, steps, opts)

    for rnd in range(opts.retrack_rounds):
        redo = _paths_to_retrack(results, opts)
        if not redo.size:
            break
        scale = 4.0 ** (rnd + 1)
        args = dict(track_args)
        args.update(h_init=opts.h_init / scale, h_max=opts.h_max / scale,
                    jump_tol=opts.jump_tol / scale, corr_iters=opts.corr_iters + 1)
        Zr, _, ks, st = kern.track_paths(kspec, z_start[redo], gamma, patch, **args)
        Z[redo], kstat[redo], steps[redo] = Zr, ks, steps[redo] + st
        retracked[redo] += 1
        sub = _classify_endpoints(kspec, kern, Z[redo], kstat[redo], steps[redo], opts)
        for j, i in enumerate(redo):
            results[i] = sub[j]
        log.debug("retrack round %d: %d paths", rnd + 1, redo.size)
    for i, r in enumerate(results):
        r.index = i
        r.retracked = int(retracked[i])

    out = _collect_real(system, kspec, kern, results, spec, A, opts)
    out.n_paths_tracked = nb
    out.n_retracked = int(np.count_nonzero(retracked))
    out.path_results = results if opts.keep_paths else []
    out.backend = kern.__name__.rsplit(".", 1)[-1].lstrip("_")
    return out


def _classify_endpoints(kspec, kern, Z, kstat, steps, opts):
    m = Z.shape[0]
    results = [None] * m
    finite = []
    for i in range(m):
        z = Z[i]
        if kstat[i] != 0 or not np.all(np.isfinite(z)):
            results[i] = PathResult(i, z[1:].copy(), TRUNCATED, np.inf, np.nan, int(steps[i]))
        elif abs(z[0]) <= opts.infinity_tol * np.max(np.abs(z)):
            results[i] = PathResult(i, z[1:].copy(), DIVERGED, np.inf, np.nan, int(steps[i]))
        else:
            finite.append(i)
    if finite:
        idx = np.array(finite)
        X = Z[idx, 1:] / Z[idx, :1]
        X, F, J = _polish_batch(kspec, kern, X, opts.polish_iters)
        res = np.max(np.abs(F), axis=1)
        sv = np.linalg.svd(J, compute_uv=False)
        smin = sv[:, -1] / np.maximum(sv[:, 0], 1.0)
        for j, i in enumerate(idx):
            st = CONVERGED if res[j] < opts.tol_end else TRUNCATED
            results[i] = PathResult(i, X[j], st, float(res[j]), float(smin[j]), int(steps[i]))
    return results


def _paths_to_retrack(results, opts):
    """Failed paths plus every path sharing a regular endpoint with another (path jumping)."""
    redo = {r.index for r in results if r.status == TRUNCATED and not (r.jacobian_min_singular < opts.rank_tol)}
    regular = [r for r in results if r.status == CONVERGED and r.jacobian_min_singular >= opts.rank_tol]
    if regular:
        pts = np.array([r.endpoint for r in regular])
        order = np.lexsort(np.round(np.c_[pts.real, pts.imag], 6).T[::-1])
        for a, b in zip(order[:-1], order[1:]):
            if np.max(np.abs(pts[a] - pts[b])) < 1e-6 * (1 + np.max(np.abs(pts[a]))):
                redo.add(regular[a].index)
                redo.add(regular[b].index)
        # near-duplicates that the sort separated
        if len(regular) < 5000:
            for i in range(len(regular)):
                d = np.max(np.abs(pts[i + 1:] - pts[i]), axis=1) if i + 1 < len(regular) else np.array([])
                for j in np.flatnonzero(d < 1e-6 * (1 + np.max(np.abs(pts[i])))):
                    redo.add(regular[i].index)
                    redo.add(regular[i + 1 + j].index)
    return np.array(sorted(redo), dtype=int)


def _collect_real(system, kspec, kern, results, spec, A, opts):
    k = system.k
    real, cont = [], []
    for r in results:
        if r.status != CONVERGED and not (r.status == TRUNCATED and r.jacobian_min_singular < opts.rank_tol):
            continue
        x = r.endpoint
        if r.jacobian_min_singular < opts.rank_tol:
            # endpoints on a positive-dimensional component land at generic,
            # usually non-real points of it; look for the real locus nearby
            xr, F, J = _pseudo_newton(kspec, kern, x.real.copy(), opts.polish_iters, 1e-13, real=True)
            if np.max(np.abs(F)) >= opts.stat_tol:
                continue
            s = np.linalg.svd(J.real, compute_uv=False)
            if s[-1] / max(s[0], 1.0) < opts.rank_tol:
                cont.append(xr)
                continue
            x = xr.astype(complex)
        if np.max(np.abs(x.imag)) >= opts.imag_tol * max(1.0, np.max(np.abs(x.real))):
            continue
        xr = x.real.copy()
        pr = newton_polish(system, xr, max_iter=opts.polish_iters, tol=1e-13,
                           rank_tol=opts.rank_tol, backend=opts.backend, spec=kspec)
        if pr.residual < opts.stat_tol:
            (real if pr.ok else cont).append(pr.point)

    points = _dedup(real, opts.dedup_tol, k)
    cont_pts = _dedup(cont, opts.dedup_tol, k)
    if spec is None or A is None:
        cands = [np.asarray(x).reshape(k, k) for x in points]
        return StationarySet(cands, [[i] for i in range(len(cands))], bool(cont_pts),
                             0, len(points), spec, A, [np.reshape(x, (k, k)) for x in cont_pts])

    cands = []
    for x in points:
        c = make_candidate(A, np.reshape(x, (k, k)), spec)
        if c.orth_residual < opts.feas_tol and c.stat_residual < opts.stat_tol:
            cands.append(c)
    # continuum components: one representative per criterion level
    reps, seen_q = [], []
    for x in cont_pts:
        c = make_candidate(A, np.reshape(x, (k, k)), spec)
        if c.orth_residual < opts.feas_tol and c.stat_residual < opts.stat_tol:
            if all(abs(c.q_value - q) > 1e-9 * (1 + abs(q)) for q in seen_q):
                reps.append(c)
                seen_q.append(c.q_value)
    cands.sort(key=lambda c: tuple(np.round(canonicalize(c.T, A), 8).ravel()) + tuple(np.round(c.T, 8).ravel()))
    classes = _orbit_classes(cands, A, opts.dedup_tol)
    return StationarySet(cands, classes, bool(reps), 0, len(cands), spec, A, reps)


def _dedup(xs, tol, k):
    if not xs:
        return []
    xs = sorted((np.asarray(x, dtype=float) for x in xs), key=lambda x: tuple(np.round(x, 8)))
    kept = []
    for x in xs:
        if all(np.linalg.norm(x - y) > tol for y in kept):
            kept.append(x)
    return kept


def _orbit_classes(cands, A, tol):
    """Group candidates whose rotations differ by a signed column permutation."""
    classes, reps = [], []
    for i, c in enumerate(cands):
        for ci, rep in enumerate(reps):
            if abs(c.q_value - cands[rep].q_value) <= 1e-9 * (1 + abs(c.q_value)) and \
                    orbit_min_distance(c.T, cands[rep].T) < tol:
                classes[ci].append(i)
                break
        else:
            reps.append(i)
            classes.append([i])
    # order classes by descending criterion value, then canonical form
    order = sorted(range(len(classes)), key=lambda ci: (
        -round(cands[classes[ci][0]].q_value, 9),
        tuple(np.round(canonicalize(cands[classes[ci][0]].T, A), 6).ravel())))
    return [classes[ci] for ci in order]


def global_q(stationary_set):
    p = stationary_set.global_point
    return None if p is None else orthomax_value(p.Lambda, stationary_set.spec)
