# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled rollout kernels for the built-in models.

Same arithmetic as ``_kernels_py``; only models with a ``kernel_id`` are
supported (0 = planar example model, 1 = linear ``A_chi chi + A_v v + B u``).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport tanh, cosh, isfinite

cnp.import_array()

cdef enum:
    MAXN = 8
    MAXM = 16


cdef inline void f_eval(int mid, const double* p, int n, const double* chi,
                        const double* v, const double* u, double* out) noexcept nogil:
    cdef int i, j
    cdef double s
    if mid == 0:
        out[0] = 0.25 * chi[0] * chi[0] + u[0]
        out[1] = 0.1 * tanh(0.5 * chi[0]) + 0.25 * chi[1] * chi[1] + u[1] + 0.1 * u[1] * u[1] * u[1]
    else:
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += p[i * n + j] * chi[j] + p[n * n + i * n + j] * v[j] + p[2 * n * n + i * n + j] * u[j]
            out[i] = s


cdef inline void f_jac(int mid, const double* p, int n, const double* chi, const double* v,
                       const double* u, double* fx, double* fv, double* fu) noexcept nogil:
    cdef int i
    cdef double ch
    if mid == 0:
        ch = cosh(0.5 * chi[0])
        fx[0] = 0.5 * chi[0]
        fx[1] = 0.0
        fx[2] = 0.05 / (ch * ch)
        fx[3] = 0.5 * chi[1]
        for i in range(4):
            fv[i] = 0.0
        fu[0] = 1.0
        fu[1] = 0.0
        fu[2] = 0.0
        fu[3] = 1.0 + 0.3 * u[1] * u[1]
    else:
        for i in range(n * n):
            fx[i] = p[i]
            fv[i] = p[n * n + i]
            fu[i] = p[2 * n * n + i]


cdef inline double stage(int mid, const double* p, int n, const double* x, const double* u,
                         const double* xd, const double* w, const double* Q, const double* R,
                         double* dx, double* g) noexcept nogil:
    """Fill ``dx = F(x, u)`` and ``g = 2 Q (x - xd)``; return the running cost."""
    cdef int m = 2 * n
    cdef int i, j
    cdef double xi[MAXM]
    cdef double lc = 0.0, s
    for i in range(n):
        dx[i] = x[n + i]
    f_eval(mid, p, n, x, x + n, u, dx + n)
    for i in range(m):
        xi[i] = x[i] - xd[i]
    for i in range(m):
        s = 0.0
        for j in range(m):
            s += Q[i * m + j] * xi[j]
        g[i] = 2.0 * s
        lc += xi[i] * s
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += R[i * n + j] * w[j]
        lc += w[i] * s
    return lc


cdef inline void stage_sens(int n, int nz, int ncol, int c0, const double* fx, const double* fv,
                            const double* fu, const double* g, const double* twoRw,
                            const double* Sin, double* dout, double* e) noexcept nogil:
    """``dout = A Sin + B E``, ``e = g^T Sin + 2 R w E`` over the first ``ncol`` columns."""
    cdef int m = 2 * n
    cdef int r, j, c
    cdef double s
    for c in range(ncol):
        for r in range(n):
            dout[r * nz + c] = Sin[(n + r) * nz + c]
        for r in range(n):
            s = 0.0
            for j in range(n):
                s += fx[r * n + j] * Sin[j * nz + c] + fv[r * n + j] * Sin[(n + j) * nz + c]
            dout[(n + r) * nz + c] = s
        s = 0.0
        for r in range(m):
            s += g[r] * Sin[r * nz + c]
        e[c] = s
    for r in range(n):
        for j in range(n):
            dout[(n + r) * nz + c0 + j] += fu[r * n + j]
    for j in range(n):
        e[c0 + j] += twoRw[j]


def rollout(int mid, double[::1] params, double[::1] x0, double[::1] chi_d, double[:, ::1] U,
            double[::1] u_ss, double dt, int n_sub, double[:, ::1] Q, double[:, ::1] R,
            bint sens=True):
    cdef int N = U.shape[0]
    cdef int n = U.shape[1]
    cdef int m = 2 * n
    cdef int M = N * n_sub
    cdef int nz = N * n
    if n > MAXN:
        raise ValueError("state dimension too large for the compiled kernel")
    cdef const double* p = &params[0] if params.shape[0] > 0 else NULL
    traj_np = np.empty((M + 1, m))
    cdef double[:, ::1] traj = traj_np
    S_np = np.zeros((M + 1, m, nz)) if sens else None
    cdef double[:, :, ::1] S
    if sens:
        S = S_np
    dc_np = np.zeros(nz)
    cdef double[::1] dc = dc_np
    work_np = np.zeros((7, m, nz))
    cdef double[:, :, ::1] work = work_np
    ework_np = np.zeros((4, nz))
    cdef double[:, ::1] ework = ework_np
    cdef double* Sx = &work[0, 0, 0]
    cdef double* d1 = &work[1, 0, 0]
    cdef double* d2 = &work[2, 0, 0]
    cdef double* d3 = &work[3, 0, 0]
    cdef double* d4 = &work[4, 0, 0]
    cdef double* s2 = &work[5, 0, 0]
    cdef double* s3 = &work[6, 0, 0]
    cdef double* e1 = &ework[0, 0]
    cdef double* e2 = &ework[1, 0]
    cdef double* e3 = &ework[2, 0]
    cdef double* e4 = &ework[3, 0]
    cdef double[:, ::1] s4buf = np.zeros((m, nz))
    cdef double* s4 = &s4buf[0, 0]

    cdef double x[MAXM]
    cdef double xs[MAXM]
    cdef double xd[MAXM]
    cdef double k1[MAXM]
    cdef double k2[MAXM]
    cdef double k3[MAXM]
    cdef double k4[MAXM]
    cdef double g1[MAXM]
    cdef double g2[MAXM]
    cdef double g3[MAXM]
    cdef double g4[MAXM]
    cdef double u[MAXN]
    cdef double w[MAXN]
    cdef double twoRw[MAXN]
    cdef double fx[MAXN * MAXN]
    cdef double fv[MAXN * MAXN]
    cdef double fu[MAXN * MAXN]
    cdef double* Qp = &Q[0, 0]
    cdef double* Rp = &R[0, 0]
    cdef double l1, l2, l3, l4, c = 0.0, s, h6 = dt / 6.0
    cdef int i, j, r, q, jn = 0, ncol, c0, idx

    for r in range(m):
        x[r] = x0[r]
        traj[0, r] = x[r]
        xd[r] = chi_d[r] if r < n else 0.0
    with nogil:
        for i in range(N):
            ncol = (i + 1) * n
            c0 = i * n
            for r in range(n):
                u[r] = U[i, r]
                w[r] = u[r] - u_ss[r]
            for r in range(n):
                s = 0.0
                for q in range(n):
                    s += Rp[r * n + q] * w[q]
                twoRw[r] = 2.0 * s
            for j in range(n_sub):
                l1 = stage(mid, p, n, x, u, xd, w, Qp, Rp, k1, g1)
                if sens:
                    f_jac(mid, p, n, x, x + n, u, fx, fv, fu)
                    stage_sens(n, nz, ncol, c0, fx, fv, fu, g1, twoRw, Sx, d1, e1)
                    for r in range(m):
                        for q in range(ncol):
                            idx = r * nz + q
                            s2[idx] = Sx[idx] + 0.5 * dt * d1[idx]
                for r in range(m):
                    xs[r] = x[r] + 0.5 * dt * k1[r]
                l2 = stage(mid, p, n, xs, u, xd, w, Qp, Rp, k2, g2)
                if sens:
                    f_jac(mid, p, n, xs, xs + n, u, fx, fv, fu)
                    stage_sens(n, nz, ncol, c0, fx, fv, fu, g2, twoRw, s2, d2, e2)
                    for r in range(m):
                        for q in range(ncol):
                            idx = r * nz + q
                            s3[idx] = Sx[idx] + 0.5 * dt * d2[idx]
                for r in range(m):
                    xs[r] = x[r] + 0.5 * dt * k2[r]
                l3 = stage(mid, p, n, xs, u, xd, w, Qp, Rp, k3, g3)
                if sens:
                    f_jac(mid, p, n, xs, xs + n, u, fx, fv, fu)
                    stage_sens(n, nz, ncol, c0, fx, fv, fu, g3, twoRw, s3, d3, e3)
                    for r in range(m):
                        for q in range(ncol):
                            idx = r * nz + q
                            s4[idx] = Sx[idx] + dt * d3[idx]
                for r in range(m):
                    xs[r] = x[r] + dt * k3[r]
                l4 = stage(mid, p, n, xs, u, xd, w, Qp, Rp, k4, g4)
                if sens:
                    f_jac(mid, p, n, xs, xs + n, u, fx, fv, fu)
                    stage_sens(n, nz, ncol, c0, fx, fv, fu, g4, twoRw, s4, d4, e4)
                    for q in range(ncol):
                        dc[q] = dc[q] + h6 * (e1[q] + 2.0 * e2[q] + 2.0 * e3[q] + e4[q])
                    for r in range(m):
                        for q in range(ncol):
                            idx = r * nz + q
                            Sx[idx] = Sx[idx] + h6 * (d1[idx] + 2.0 * d2[idx] + 2.0 * d3[idx] + d4[idx])
                c = c + h6 * (l1 + 2.0 * l2 + 2.0 * l3 + l4)
                for r in range(m):
                    x[r] = x[r] + h6 * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r])
                jn += 1
                for r in range(m):
                    traj[jn, r] = x[r]
                if sens:
                    for r in range(m):
                        for q in range(ncol):
                            S[jn, r, q] = Sx[r * nz + q]
    return traj_np, c, S_np, dc_np


cdef inline void track_rhs(int mid, const double* p, int n, const double* z, const double* ubar,
                           double k, const double* ulo, const double* uhi, const double* d,
                           double* out, double* uapp) noexcept nogil:
    cdef int i
    cdef double a[MAXN]
    cdef double ab[MAXN]
    cdef double kap
    for i in range(n):
        kap = -k * (z[i] - z[2 * n + i]) - k * (z[n + i] - z[3 * n + i])
        kap = ubar[i] + kap
        if kap < ulo[i]:
            kap = ulo[i]
        elif kap > uhi[i]:
            kap = uhi[i]
        uapp[i] = kap
    f_eval(mid, p, n, z, z + n, uapp, a)
    f_eval(mid, p, n, z + 2 * n, z + 3 * n, ubar, ab)
    for i in range(n):
        out[i] = z[n + i]
        out[n + i] = a[i] + d[i]
        out[2 * n + i] = z[3 * n + i]
        out[3 * n + i] = ab[i]


def track(int mid, double[::1] params, double[::1] x0, double[::1] xbar0, double[::1] ubar,
          double k, double[::1] u_lo, double[::1] u_hi, double[:, ::1] D, double dt):
    cdef int n = ubar.shape[0]
    cdef int n_sub = D.shape[0]
    cdef int L = 4 * n
    if n > MAXN:
        raise ValueError("state dimension too large for the compiled kernel")
    cdef const double* p = &params[0] if params.shape[0] > 0 else NULL
    X_np = np.empty((n_sub + 1, L))
    U_np = np.empty((n_sub, n))
    cdef double[:, ::1] X = X_np
    cdef double[:, ::1] Ua = U_np
    cdef double z[4 * MAXN]
    cdef double zs[4 * MAXN]
    cdef double k1[4 * MAXN]
    cdef double k2[4 * MAXN]
    cdef double k3[4 * MAXN]
    cdef double k4[4 * MAXN]
    cdef double ua[MAXN]
    cdef double junk[MAXN]
    cdef int s, i
    cdef double h6 = dt / 6.0
    for i in range(2 * n):
        z[i] = x0[i]
        z[2 * n + i] = xbar0[i]
    for i in range(L):
        X[0, i] = z[i]
    with nogil:
        for s in range(n_sub):
            track_rhs(mid, p, n, z, &ubar[0], k, &u_lo[0], &u_hi[0], &D[s, 0], k1, ua)
            for i in range(n):
                Ua[s, i] = ua[i]
            for i in range(L):
                zs[i] = z[i] + 0.5 * dt * k1[i]
            track_rhs(mid, p, n, zs, &ubar[0], k, &u_lo[0], &u_hi[0], &D[s, 0], k2, junk)
            for i in range(L):
                zs[i] = z[i] + 0.5 * dt * k2[i]
            track_rhs(mid, p, n, zs, &ubar[0], k, &u_lo[0], &u_hi[0], &D[s, 0], k3, junk)
            for i in range(L):
                zs[i] = z[i] + dt * k3[i]
            track_rhs(mid, p, n, zs, &ubar[0], k, &u_lo[0], &u_hi[0], &D[s, 0], k4, junk)
            for i in range(L):
                z[i] = z[i] + h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                X[s + 1, i] = z[i]
    return X_np, U_np
