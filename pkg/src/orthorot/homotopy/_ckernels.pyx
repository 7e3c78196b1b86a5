# cython: language_level=3
"""Compiled path-tracking kernels.

Mirrors ``_pykernels`` function for function. Points are homogeneous:
``z[0]`` is the homogenizing coordinate and ``z[1:]`` the affine variables.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport parallel, prange
from libc.stdlib cimport malloc, free
from libc.math cimport fabs, sqrt

ctypedef double complex cplx

cdef extern from "complex.h" nogil:
    double cabs(cplx)

cdef enum:
    MAXFAC = 32

cdef struct Sys:
    int mode
    int n
    int nterms
    int *term_poly
    cplx *term_coef
    int *term_start
    int *term_deg
    int *fac_var
    int *fac_exp
    int p
    int k
    double *A
    double kappa
    int *deg


cdef inline double cnorm_inf(cplx *v, int n) nogil:
    cdef double m = 0.0, a
    cdef int i
    for i in range(n):
        a = cabs(v[i])
        if a > m:
            m = a
    return m


cdef inline double cabs1(cplx x) nogil:
    return fabs(x.real) + fabs(x.imag)


cdef inline cplx cpow(cplx x, int e) nogil:
    cdef cplx r = 1.0
    cdef int i
    for i in range(e):
        r = r * x
    return r


cdef void eval_target(Sys *s, cplx *z, cplx *F, cplx *J, int ld, cplx *scratch) nogil:
    """F^h(z) (n values) and its Jacobian w.r.t. z (n x (n+1), row stride ld)."""
    cdef int n = s.n
    cdef int r, c, i, u, v, j, l, q, m, a, b, nf
    cdef cplx val, x0 = z[0]
    cdef cplx pw[MAXFAC]
    cdef cplx dpw[MAXFAC]
    cdef int vars_[MAXFAC]
    cdef cplx pre[MAXFAC + 1]
    cdef cplx suf[MAXFAC + 1]
    cdef int e, dx0
    for r in range(n):
        F[r] = 0.0
        for c in range(n + 1):
            J[r * ld + c] = 0.0
    if s.mode == 0:
        for q in range(s.nterms):
            r = s.term_poly[q]
            a = s.term_start[q]
            b = s.term_start[q + 1]
            nf = 0
            dx0 = s.deg[r] - s.term_deg[q]
            if dx0 > 0:
                vars_[nf] = 0
                pw[nf] = cpow(x0, dx0)
                dpw[nf] = dx0 * cpow(x0, dx0 - 1)
                nf += 1
            for m in range(a, b):
                e = s.fac_exp[m]
                vars_[nf] = s.fac_var[m] + 1
                pw[nf] = cpow(z[vars_[nf]], e)
                dpw[nf] = e * cpow(z[vars_[nf]], e - 1)
                nf += 1
            pre[0] = 1.0
            for m in range(nf):
                pre[m + 1] = pre[m] * pw[m]
            suf[nf] = 1.0
            for m in range(nf - 1, -1, -1):
                suf[m] = suf[m + 1] * pw[m]
            F[r] = F[r] + s.term_coef[q] * pre[nf]
            for m in range(nf):
                J[r * ld + vars_[m]] = J[r * ld + vars_[m]] + s.term_coef[q] * pre[m] * dpw[m] * suf[m + 1]
        return
    # structured orthomax system
    cdef int p = s.p, k = s.k
    cdef double kap = s.kappa
    cdef cplx *lam = scratch
    cdef cplx *nrm = scratch + p * k
    cdef cplx *dj = nrm + k
    cdef cplx *dl = dj + p
    cdef cplx P, d, lj, ll, acc_j, acc_l
    for i in range(p):
        for v in range(k):
            val = 0.0
            for l in range(k):
                val = val + s.A[i * k + l] * z[1 + l * k + v]
            lam[i * k + v] = val
    for v in range(k):
        val = 0.0
        for i in range(p):
            val = val + lam[i * k + v] * lam[i * k + v]
        nrm[v] = val
    r = 0
    for j in range(k):
        for l in range(j, k):
            val = 0.0
            for u in range(k):
                val = val + z[1 + u * k + j] * z[1 + u * k + l]
                J[r * ld + 1 + u * k + j] = J[r * ld + 1 + u * k + j] + z[1 + u * k + l]
                J[r * ld + 1 + u * k + l] = J[r * ld + 1 + u * k + l] + z[1 + u * k + j]
            if j == l:
                val = val - x0 * x0
                J[r * ld] = -2.0 * x0
            F[r] = val
            r += 1
    for j in range(k):
        for l in range(j + 1, k):
            P = 0.0
            for i in range(p):
                P = P + lam[i * k + j] * lam[i * k + l]
            d = nrm[l] - nrm[j]
            val = 0.0
            for i in range(p):
                lj = lam[i * k + j]
                ll = lam[i * k + l]
                val = val + lj * ll * (ll * ll - lj * lj)
                dj[i] = ll * ll * ll - 3.0 * lj * lj * ll - kap * ll * d + 2.0 * kap * P * lj
                dl[i] = 3.0 * lj * ll * ll - lj * lj * lj - kap * lj * d - 2.0 * kap * P * ll
            F[r] = val - kap * P * d
            for u in range(k):
                acc_j = 0.0
                acc_l = 0.0
                for i in range(p):
                    acc_j = acc_j + s.A[i * k + u] * dj[i]
                    acc_l = acc_l + s.A[i * k + u] * dl[i]
                J[r * ld + 1 + u * k + j] = acc_j
                J[r * ld + 1 + u * k + l] = acc_l
            r += 1


cdef int lu_solve(cplx *M, cplx *rhs, int N, int ld, int *piv) nogil:
    """Solve M x = rhs in place (rhs overwritten). Returns 1 if singular."""
    cdef int i, j, c, pr
    cdef double best, a
    cdef cplx tmp, f
    for c in range(N):
        pr = c
        best = cabs1(M[c * ld + c])
        for i in range(c + 1, N):
            a = cabs1(M[i * ld + c])
            if a > best:
                best = a
                pr = i
        if best == 0.0:
            return 1
        if pr != c:
            for j in range(N):
                tmp = M[c * ld + j]
                M[c * ld + j] = M[pr * ld + j]
                M[pr * ld + j] = tmp
            tmp = rhs[c]
            rhs[c] = rhs[pr]
            rhs[pr] = tmp
        for i in range(c + 1, N):
            f = M[i * ld + c] / M[c * ld + c]
            if f != 0.0:
                for j in range(c + 1, N):
                    M[i * ld + j] = M[i * ld + j] - f * M[c * ld + j]
                rhs[i] = rhs[i] - f * rhs[c]
    for i in range(N - 1, -1, -1):
        tmp = rhs[i]
        for j in range(i + 1, N):
            tmp = tmp - M[i * ld + j] * rhs[j]
        rhs[i] = tmp / M[i * ld + i]
    return 0


cdef void homotopy_eval(Sys *s, cplx *z, double tau, cplx gamma, cplx *patch,
                        cplx *H, cplx *Ht, cplx *JH, cplx *F, cplx *JF, cplx *scratch) nogil:
    """H(z, tau), dH/dtau and dH/dz as an (n+1)-square system incl. the patch row."""
    cdef int n = s.n, N = n + 1, i, c, d
    cdef cplx g, gx, gx0, a = (1.0 - tau) * gamma
    eval_target(s, z, F, JF, N, scratch)
    for i in range(n):
        d = s.deg[i]
        gx = cpow(z[i + 1], d - 1)
        gx0 = cpow(z[0], d - 1)
        g = gx * z[i + 1] - gx0 * z[0]
        H[i] = a * g + tau * F[i]
        Ht[i] = F[i] - gamma * g
        for c in range(N):
            JH[i * N + c] = tau * JF[i * N + c]
        JH[i * N + i + 1] = JH[i * N + i + 1] + a * d * gx
        JH[i * N] = JH[i * N] - a * d * gx0
    H[n] = -1.0
    for c in range(N):
        H[n] = H[n] + patch[c] * z[c]
        JH[n * N + c] = patch[c]
    Ht[n] = 0.0


cdef int track_one(Sys *s, cplx *z, cplx gamma, cplx *patch, double tau_end,
                   double h_init, double h_max, double h_min, int max_steps,
                   int corr_iters, double corr_tol, double jump_tol, int end_iters, int grow_after,
                   double *tau_out, int *steps_out, cplx *work, int *piv) nogil:
    cdef int n = s.n, N = n + 1, i, it, ok, succ = 0, steps = 0, status = 0
    cdef double tau = 0.0, h = h_init, hh, tnew, nd, nz, nprev = 0.0, theta
    cdef cplx *H = work
    cdef cplx *Ht = H + N
    cdef cplx *JH = Ht + N
    cdef cplx *F = JH + N * N
    cdef cplx *JF = F + N
    cdef cplx *zp = JF + N * N
    cdef cplx *dz = zp + N
    cdef cplx *scratch = dz + N
    while tau < tau_end:
        if steps >= max_steps:
            status = 2
            break
        steps += 1
        hh = h
        if hh > tau_end - tau:
            hh = tau_end - tau
        tnew = tau + hh
        homotopy_eval(s, z, tau, gamma, patch, H, Ht, JH, F, JF, scratch)
        for i in range(N):
            dz[i] = -Ht[i]
        ok = 0
        if lu_solve(JH, dz, N, N, piv) == 0:
            for i in range(N):
                zp[i] = z[i] + hh * dz[i]
            for it in range(corr_iters):
                homotopy_eval(s, zp, tnew, gamma, patch, H, Ht, JH, F, JF, scratch)
                for i in range(N):
                    dz[i] = -H[i]
                if lu_solve(JH, dz, N, N, piv) != 0:
                    break
                for i in range(N):
                    zp[i] = zp[i] + dz[i]
                nd = cnorm_inf(dz, N)
                nz = cnorm_inf(zp, N)
                if it == 0 and nd > jump_tol * (1.0 + nz):
                    break
                if nd <= corr_tol * (1.0 + nz):
                    ok = 1
                    break
                if it > 0:
                    # contraction estimate of the error left after this update
                    theta = nd / nprev
                    if theta < 0.5 and nd * theta / (1.0 - theta) <= corr_tol * (1.0 + nz):
                        ok = 1
                        break
                nprev = nd
        if ok:
            for i in range(N):
                z[i] = zp[i]
            tau = tnew
            succ += 1
            if succ >= grow_after:
                h = h * 2.0
                if h > h_max:
                    h = h_max
                succ = 0
        else:
            h = h * 0.5
            succ = 0
            if h < h_min:
                status = 1
                break
    if status == 0:
        # endgame: Newton on the target system at tau = 1
        for it in range(end_iters):
            homotopy_eval(s, z, 1.0, gamma, patch, H, Ht, JH, F, JF, scratch)
            for i in range(N):
                dz[i] = -H[i]
            if lu_solve(JH, dz, N, N, piv) != 0:
                break
            for i in range(N):
                z[i] = z[i] + dz[i]
            if cnorm_inf(dz, N) <= 1e-15 * (1.0 + cnorm_inf(z, N)):
                break
    tau_out[0] = tau
    steps_out[0] = steps
    return status


cdef class _SysHolder:
    cdef Sys s
    cdef object refs

    def __cinit__(self, spec):
        cdef cnp.ndarray[int, ndim=1] term_poly = np.ascontiguousarray(spec["term_poly"], dtype=np.intc)
        cdef cnp.ndarray[cplx, ndim=1] term_coef = np.ascontiguousarray(spec["term_coef"], dtype=np.complex128)
        cdef cnp.ndarray[int, ndim=1] term_start = np.ascontiguousarray(spec["term_start"], dtype=np.intc)
        cdef cnp.ndarray[int, ndim=1] term_deg = np.ascontiguousarray(spec["term_deg"], dtype=np.intc)
        cdef cnp.ndarray[int, ndim=1] fac_var = np.ascontiguousarray(spec["fac_var"], dtype=np.intc)
        cdef cnp.ndarray[int, ndim=1] fac_exp = np.ascontiguousarray(spec["fac_exp"], dtype=np.intc)
        cdef cnp.ndarray[double, ndim=1] A = np.ascontiguousarray(np.ravel(spec["A"]), dtype=np.float64)
        cdef cnp.ndarray[int, ndim=1] deg = np.ascontiguousarray(spec["deg"], dtype=np.intc)
        # 1-element padding keeps data pointers valid for empty arrays
        self.refs = []
        for arr in (term_poly, term_coef, term_start, term_deg, fac_var, fac_exp, A, deg):
            self.refs.append(arr)
        self.s.mode = spec["mode"]
        self.s.n = spec["n"]
        self.s.nterms = term_poly.shape[0]
        self.s.term_poly = <int *> term_poly.data
        self.s.term_coef = <cplx *> term_coef.data
        self.s.term_start = <int *> term_start.data
        self.s.term_deg = <int *> term_deg.data
        self.s.fac_var = <int *> fac_var.data
        self.s.fac_exp = <int *> fac_exp.data
        self.s.p = spec["p"]
        self.s.k = spec["k"]
        self.s.A = <double *> A.data
        self.s.kappa = spec["kappa"]
        self.s.deg = <int *> deg.data


cdef int _work_size(Sys *s) nogil:
    cdef int N = s.n + 1
    return 2 * N * N + 6 * N + s.p * s.k + s.k + 2 * s.p + 8


def track_paths(spec, starts, gamma, patch, double tau_end, double h_init,
                double h_max, double h_min, int max_steps, int corr_iters,
                double corr_tol, double jump_tol, int end_iters, int grow_after=5, int threads=1):
    """Track every start point from tau = 0 to `tau_end`, then Newton at tau = 1."""
    cdef _SysHolder hold = _SysHolder(spec)
    cdef Sys *s = &hold.s
    cdef cnp.ndarray[cplx, ndim=2] Z = np.array(starts, dtype=np.complex128, order="C", copy=True)
    cdef cnp.ndarray[cplx, ndim=1] pt = np.ascontiguousarray(patch, dtype=np.complex128)
    cdef int npaths = Z.shape[0], N = s.n + 1
    cdef cnp.ndarray[double, ndim=1] taus = np.zeros(npaths)
    cdef cnp.ndarray[int, ndim=1] steps = np.zeros(npaths, dtype=np.intc)
    cdef cnp.ndarray[int, ndim=1] status = np.zeros(npaths, dtype=np.intc)
    cdef cplx g = gamma
    cdef cplx *zdata = <cplx *> Z.data
    cdef cplx *pdata = <cplx *> pt.data
    cdef double *tdata = <double *> taus.data
    cdef int *sdata = <int *> steps.data
    cdef int *stdata = <int *> status.data
    cdef int i, wsz = _work_size(s)
    cdef cplx *work
    cdef int *piv
    if Z.shape[1] != N:
        raise ValueError("start points have the wrong dimension")
    if threads < 1:
        threads = 1
    with nogil, parallel(num_threads=threads):
        work = <cplx *> malloc(wsz * sizeof(cplx))
        piv = <int *> malloc(N * sizeof(int))
        for i in prange(npaths, schedule="dynamic"):
            stdata[i] = track_one(s, zdata + i * N, g, pdata, tau_end, h_init, h_max, h_min,
                                  max_steps, corr_iters, corr_tol, jump_tol, end_iters, grow_after,
                                  tdata + i, sdata + i, work, piv)
        free(work)
        free(piv)
    return Z, taus, status, steps


def eval_affine(spec, points):
    """F(x) and dF/dx at affine points (x0 = 1); returns (F[m, n], J[m, n, n])."""
    cdef _SysHolder hold = _SysHolder(spec)
    cdef Sys *s = &hold.s
    cdef int n = s.n, N = n + 1, m, r, c
    cdef cnp.ndarray[cplx, ndim=2] X = np.atleast_2d(np.asarray(points, dtype=np.complex128))
    cdef int npts = X.shape[0]
    cdef cnp.ndarray[cplx, ndim=2] Fo = np.zeros((npts, n), dtype=np.complex128)
    cdef cnp.ndarray[cplx, ndim=3] Jo = np.zeros((npts, n, n), dtype=np.complex128)
    cdef cnp.ndarray[cplx, ndim=1] z = np.zeros(N, dtype=np.complex128)
    cdef cnp.ndarray[cplx, ndim=1] F = np.zeros(n, dtype=np.complex128)
    cdef cnp.ndarray[cplx, ndim=1] JF = np.zeros(n * N, dtype=np.complex128)
    cdef cnp.ndarray[cplx, ndim=1] scratch = np.zeros(_work_size(s), dtype=np.complex128)
    for m in range(npts):
        z[0] = 1.0
        for c in range(n):
            z[c + 1] = X[m, c]
        eval_target(s, <cplx *> z.data, <cplx *> F.data, <cplx *> JF.data, N, <cplx *> scratch.data)
        for r in range(n):
            Fo[m, r] = F[r]
            for c in range(n):
                Jo[m, r, c] = JF[r * N + c + 1]
    return Fo, Jo
