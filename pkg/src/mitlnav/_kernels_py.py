"""Pure-Python rollout kernel (reference implementation and fallback).

Integrates the nominal dynamics under piecewise-constant controls with RK4,
accumulates the running cost as an extra state and, on request, propagates
forward sensitivities of every integration node with respect to all
controls.  The compiled kernel implements exactly the same arithmetic.
"""
import numpy as np


def _stage(model, x, u, xd, w, Q, R, n, want_jac):
    chi, v = x[:n], x[n:]
    a = model.f(chi, v, u)
    dx = np.concatenate([v, a])
    xi = x - xd
    Qxi = Q @ xi
    Rw = R @ w
    lc = xi @ Qxi + w @ Rw
    if not want_jac:
        return dx, lc, None, None, None
    fx, fv, fu = model.jac(chi, v, u) if model.jac is not None else _fd(model, chi, v, u)
    A = np.zeros((2 * n, 2 * n))
    A[:n, n:] = np.eye(n)
    A[n:, :n] = fx
    A[n:, n:] = fv
    return dx, lc, A, fu, 2.0 * Qxi


def _fd(model, chi, v, u):
    from .dynamics import jacobians
    return jacobians(model, chi, v, u, finite_difference=True)


def rollout(model, x0, chi_d, U, u_ss, dt, n_sub, Q, R, sens=True):
    """Simulate the nominal system.

    Returns ``(traj, cost, S, dcost)``: states at every integration node
    ``(N*n_sub + 1, 2n)``, the accumulated running cost, node sensitivities
    ``(N*n_sub + 1, 2n, N*n)`` and the running-cost gradient ``(N*n,)``.
    """
    U = np.asarray(U, float)
    N, n = U.shape
    m = 2 * n
    M = N * n_sub
    nz = N * n
    xd = np.concatenate([np.asarray(chi_d, float), np.zeros(n)])
    x = np.asarray(x0, float).copy()
    traj = np.empty((M + 1, m))
    traj[0] = x
    S = np.zeros((M + 1, m, nz)) if sens else None
    Sx = np.zeros((m, nz))
    c = 0.0
    dc = np.zeros(nz)
    j = 0
    for i in range(N):
        u = U[i]
        w = u - u_ss
        cols = slice(i * n, (i + 1) * n)
        twoRw = 2.0 * (R @ w)
        for _ in range(n_sub):
            k1, l1, A1, B1, g1 = _stage(model, x, u, xd, w, Q, R, n, sens)
            x2 = x + 0.5 * dt * k1
            k2, l2, A2, B2, g2 = _stage(model, x2, u, xd, w, Q, R, n, sens)
            x3 = x + 0.5 * dt * k2
            k3, l3, A3, B3, g3 = _stage(model, x3, u, xd, w, Q, R, n, sens)
            x4 = x + dt * k3
            k4, l4, A4, B4, g4 = _stage(model, x4, u, xd, w, Q, R, n, sens)
            if sens:
                d1 = A1 @ Sx
                d1[n:, cols] += B1
                s2 = Sx + 0.5 * dt * d1
                d2 = A2 @ s2
                d2[n:, cols] += B2
                s3 = Sx + 0.5 * dt * d2
                d3 = A3 @ s3
                d3[n:, cols] += B3
                s4 = Sx + dt * d3
                d4 = A4 @ s4
                d4[n:, cols] += B4
                e1 = g1 @ Sx
                e2 = g2 @ s2
                e3 = g3 @ s3
                e4 = g4 @ s4
                for e in (e1, e2, e3, e4):
                    e[cols] += twoRw
                dc = dc + dt / 6.0 * (e1 + 2 * e2 + 2 * e3 + e4)
                Sx = Sx + dt / 6.0 * (d1 + 2 * d2 + 2 * d3 + d4)
            c += dt / 6.0 * (l1 + 2 * l2 + 2 * l3 + l4)
            x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            j += 1
            traj[j] = x
            if sens:
                S[j] = Sx
    return traj, c, S, dc


def track(model, x0, xbar0, ubar, k, u_lo, u_hi, D, dt):
    """Closed-loop real/nominal pair over one sampling period.

    The real system receives ``clip(ubar + kappa)`` with the ancillary
    feedback evaluated inside every RK4 stage.  Row ``s`` of ``D`` is the
    disturbance held over integration step ``s``.  Returns the stacked
    ``(real, nominal)`` node states ``(n_sub + 1, 4n)`` and the input applied
    at the start of each step ``(n_sub, n)``.
    """
    n = model.n
    f = model.f
    n_sub = D.shape[0]

    def rhs(z, d):
        x, xb = z[:2 * n], z[2 * n:]
        kappa = -k * (x[:n] - xb[:n]) - k * (x[n:] - xb[n:])
        u = np.minimum(np.maximum(ubar + kappa, u_lo), u_hi)
        return np.concatenate([x[n:], f(x[:n], x[n:], u) + d, xb[n:], f(xb[:n], xb[n:], ubar)]), u

    z = np.concatenate([x0, xbar0])
    X = np.empty((n_sub + 1, 4 * n))
    Uapp = np.empty((n_sub, n))
    X[0] = z
    for s in range(n_sub):
        d = D[s]
        k1, Uapp[s] = rhs(z, d)
        k2, _ = rhs(z + 0.5 * dt * k1, d)
        k3, _ = rhs(z + 0.5 * dt * k2, d)
        k4, _ = rhs(z + dt * k3, d)
        z = z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        X[s + 1] = z
    return X, Uapp
