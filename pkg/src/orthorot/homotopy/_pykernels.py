"""Pure numpy implementation of the path-tracking kernels.

Same contract as the compiled ``_ckernels`` module. All paths advance in
lockstep, but each keeps its own parameter value, step size and success
counter, so every path follows the same per-path state machine as the
compiled tracker.
"""

import numpy as np

_CHUNK = 512


def _powers(z, maxdeg):
    """``P[..., v, e] = z_v ** e`` for ``e = 0..maxdeg``."""
    out = np.empty(z.shape + (maxdeg + 1,), dtype=complex)
    out[..., 0] = 1.0
    for e in range(1, maxdeg + 1):
        out[..., e] = out[..., e - 1] * z
    return out


class _Generic:
    def __init__(self, spec):
        n = spec["n"]
        nterms = len(spec["term_poly"])
        E = np.zeros((nterms, n + 1), dtype=int)
        start = spec["term_start"]
        for q in range(nterms):
            for m in range(start[q], start[q + 1]):
                E[q, spec["fac_var"][m] + 1] = spec["fac_exp"][m]
            E[q, 0] = spec["deg"][spec["term_poly"][q]] - spec["term_deg"][q]
        self.E = E
        self.poly = np.asarray(spec["term_poly"], dtype=int)
        self.coef = np.asarray(spec["term_coef"], dtype=complex)
        self.n = n
        self.maxdeg = int(E.max(initial=1))
        # scatter matrix: poly x term
        self.S = np.zeros((n, nterms))
        self.S[self.poly, np.arange(nterms)] = 1.0

    def __call__(self, Z):
        m = Z.shape[0]
        n, N = self.n, self.n + 1
        F = np.zeros((m, n), dtype=complex)
        J = np.zeros((m, n, N), dtype=complex)
        cols = np.arange(N)
        for a in range(0, m, _CHUNK):
            z = Z[a:a + _CHUNK]
            P = _powers(z, self.maxdeg)
            D = np.zeros_like(P)
            D[..., 1:] = P[..., :-1] * np.arange(1, self.maxdeg + 1)
            pw = P[:, cols[None, :], self.E]  # (b, T, N)
            dpw = D[:, cols[None, :], self.E]
            pre = np.ones((z.shape[0], len(self.coef), N + 1), dtype=complex)
            np.cumprod(pw, axis=2, out=pre[:, :, 1:])
            suf = np.ones_like(pre)
            np.cumprod(pw[:, :, ::-1], axis=2, out=suf[:, :, 1:])
            suf = suf[:, :, ::-1]  # suf[:, :, v] = prod_{w >= v}
            mon = self.coef * pre[:, :, N]
            F[a:a + _CHUNK] = mon @ self.S.T
            dmon = self.coef[None, :, None] * pre[:, :, :N] * dpw * suf[:, :, 1:]
            J[a:a + _CHUNK] = np.einsum("pt,btv->bpv", self.S, dmon)
        return F, J


class _Orthomax:
    def __init__(self, spec):
        self.p, self.k = spec["p"], spec["k"]
        self.A = np.asarray(spec["A"], dtype=float).reshape(self.p, self.k)
        self.kappa = spec["kappa"]
        self.n = spec["n"]
        k = self.k
        self.orth = [(j, l) for j in range(k) for l in range(j, k)]
        self.sym = [(j, l) for j in range(k) for l in range(j + 1, k)]

    def __call__(self, Z):
        m = Z.shape[0]
        k, n = self.k, self.n
        x0 = Z[:, 0]
        T = Z[:, 1:].reshape(m, k, k)
        F = np.zeros((m, n), dtype=complex)
        J = np.zeros((m, n, n + 1), dtype=complex)
        Jt = np.zeros((m, n, k, k), dtype=complex)
        r = 0
        for j, l in self.orth:
            F[:, r] = np.sum(T[:, :, j] * T[:, :, l], axis=1)
            Jt[:, r, :, j] += T[:, :, l]
            Jt[:, r, :, l] += T[:, :, j]
            if j == l:
                F[:, r] -= x0 * x0
                J[:, r, 0] = -2.0 * x0
            r += 1
        lam = np.einsum("il,mlv->miv", self.A, T)
        nrm = np.sum(lam * lam, axis=1)
        kap = self.kappa
        for j, l in self.sym:
            lj, ll = lam[:, :, j], lam[:, :, l]
            P = np.sum(lj * ll, axis=1)[:, None]
            d = (nrm[:, l] - nrm[:, j])[:, None]
            F[:, r] = np.sum(lj * ll * (ll * ll - lj * lj), axis=1) - kap * P[:, 0] * d[:, 0]
            dj = ll**3 - 3.0 * lj * lj * ll - kap * ll * d + 2.0 * kap * P * lj
            dl = 3.0 * lj * ll * ll - lj**3 - kap * lj * d - 2.0 * kap * P * ll
            Jt[:, r, :, j] = dj @ self.A
            Jt[:, r, :, l] = dl @ self.A
            r += 1
        J[:, :, 1:] = Jt.reshape(m, n, n)
        return F, J


def _evaluator(spec):
    return _Orthomax(spec) if spec["mode"] == 1 else _Generic(spec)


def _homotopy(ev, deg, Z, tau, gamma, patch):
    m, N = Z.shape
    n = N - 1
    F, JF = ev(Z)
    x = Z[:, 1:]
    x0 = Z[:, :1]
    gx = x ** (deg - 1)
    gx0 = x0 ** (deg - 1)
    g = gx * x - gx0 * x0
    a = ((1.0 - tau) * gamma)[:, None]
    H = np.empty((m, N), dtype=complex)
    Ht = np.zeros((m, N), dtype=complex)
    JH = np.empty((m, N, N), dtype=complex)
    H[:, :n] = a * g + tau[:, None] * F
    Ht[:, :n] = F - gamma * g
    JH[:, :n, :] = tau[:, None, None] * JF
    idx = np.arange(n)
    JH[:, idx, idx + 1] += a * deg * gx
    JH[:, :n, 0] -= a * deg * gx0
    H[:, n] = Z @ patch - 1.0
    JH[:, n, :] = patch
    return H, Ht, JH


def _solve(M, b):
    """Batched solve; singular systems come back flagged instead of raising."""
    ok = np.ones(len(b), dtype=bool)
    try:
        return np.linalg.solve(M, b[..., None])[..., 0], ok
    except np.linalg.LinAlgError:
        x = np.zeros_like(b)
        for i in range(len(b)):
            try:
                x[i] = np.linalg.solve(M[i], b[i])
            except np.linalg.LinAlgError:
                ok[i] = False
        return x, ok


def track_paths(spec, starts, gamma, patch, tau_end, h_init, h_max, h_min,
                max_steps, corr_iters, corr_tol, jump_tol, end_iters, grow_after=5, threads=1):
    ev = _evaluator(spec)
    deg = np.asarray(spec["deg"], dtype=int)
    patch = np.asarray(patch, dtype=complex)
    Z = np.array(starts, dtype=complex, copy=True)
    npaths, N = Z.shape
    tau = np.zeros(npaths)
    h = np.full(npaths, float(h_init))
    succ = np.zeros(npaths, dtype=int)
    steps = np.zeros(npaths, dtype=np.intc)
    status = np.zeros(npaths, dtype=np.intc)
    active = tau < tau_end

    while np.any(active):
        idx = np.flatnonzero(active)
        over = steps[idx] >= max_steps
        status[idx[over]] = 2
        active[idx[over]] = False
        idx = idx[~over]
        if idx.size == 0:
            break
        steps[idx] += 1
        z = Z[idx]
        hh = np.minimum(h[idx], tau_end - tau[idx])
        tnew = tau[idx] + hh
        _, Ht, JH = _homotopy(ev, deg, z, tau[idx], gamma, patch)
        dz, okp = _solve(JH, -Ht)
        zp = z + hh[:, None] * dz
        ok = np.zeros(idx.size, dtype=bool)
        running = okp.copy()
        nprev = np.zeros(idx.size)
        for it in range(corr_iters):
            if not running.any():
                break
            r = np.flatnonzero(running)
            H, _, JH = _homotopy(ev, deg, zp[r], tnew[r], gamma, patch)
            d, oks = _solve(JH, -H)
            running[r[~oks]] = False
            r, d = r[oks], d[oks]
            zp[r] += d
            nd = np.max(np.abs(d), axis=1)
            nz = np.max(np.abs(zp[r]), axis=1)
            if it == 0:
                jump = nd > jump_tol * (1.0 + nz)
                running[r[jump]] = False
                keep = ~jump
                r, nd, nz = r[keep], nd[keep], nz[keep]
            conv = nd <= corr_tol * (1.0 + nz)
            if it > 0:
                # contraction estimate of the error left after this update
                theta = nd / nprev[r]
                conv |= (theta < 0.5) & (nd * theta / (1.0 - theta) <= corr_tol * (1.0 + nz))
            nprev[r] = nd
            ok[r[conv]] = True
            running[r[conv]] = False
        acc, rej = idx[ok], idx[~ok]
        Z[acc] = zp[ok]
        tau[acc] = tnew[ok]
        succ[acc] += 1
        grow = acc[succ[acc] >= grow_after]
        h[grow] = np.minimum(h[grow] * 2.0, h_max)
        succ[grow] = 0
        h[rej] *= 0.5
        succ[rej] = 0
        fail = rej[h[rej] < h_min]
        status[fail] = 1
        active[fail] = False
        active[acc[tau[acc] >= tau_end]] = False

    done = np.flatnonzero(status == 0)
    running = np.ones(done.size, dtype=bool)
    one = np.ones(npaths)
    for _ in range(end_iters):
        if not running.any():
            break
        r = done[running]
        H, _, JH = _homotopy(ev, deg, Z[r], one[r], gamma, patch)
        d, oks = _solve(JH, -H)
        Z[r[oks]] += d[oks]
        small = np.max(np.abs(d), axis=1) <= 1e-15 * (1.0 + np.max(np.abs(Z[r]), axis=1))
        stop = ~oks | small
        running[np.flatnonzero(running)[stop]] = False
    return Z, tau, status, steps


def eval_affine(spec, points):
    X = np.atleast_2d(np.asarray(points, dtype=complex))
    Z = np.concatenate([np.ones((X.shape[0], 1), dtype=complex), X], axis=1)
    F, J = _evaluator(spec)(Z)
    return F, np.ascontiguousarray(J[:, :, 1:])
