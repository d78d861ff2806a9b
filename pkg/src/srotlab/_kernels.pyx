# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled RK4 kernels for the catalog frames.

Frame codes: 0 heisenberg, 1 martinet, 2 two_generating_r4, 3 rank2_dim4.
The numpy twin lives in ``_fallback.py`` and must stay numerically
equivalent (same stage ordering, same control interpolation).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport isfinite

cnp.import_array()

DEF MAXN = 4
DEF MAXM = 3

cdef int _dims(int code, int* n, int* m) noexcept nogil:
    if code == 0 or code == 1:
        n[0] = 3; m[0] = 2
    elif code == 2:
        n[0] = 4; m[0] = 3
    elif code == 3:
        n[0] = 4; m[0] = 2
    else:
        return -1
    return 0


def dims(int code):
    cdef int n, m
    if _dims(code, &n, &m) < 0:
        raise ValueError(f"unknown kernel code {code}")
    return n, m


cdef inline void _frame(int code, const double* x, double* F, double* D) noexcept nogil:
    # F[i*MAXN + k] = f_i^k ; D[(i*MAXN + k)*MAXN + l] = d f_i^k / d x_l
    cdef int a
    for a in range(MAXM * MAXN):
        F[a] = 0.0
    for a in range(MAXM * MAXN * MAXN):
        D[a] = 0.0
    F[0 * MAXN + 0] = 1.0
    F[1 * MAXN + 1] = 1.0
    if code == 0:
        F[1 * MAXN + 2] = x[0]
        D[(1 * MAXN + 2) * MAXN + 0] = 1.0
    elif code == 1:
        F[1 * MAXN + 2] = x[0] * x[0]
        D[(1 * MAXN + 2) * MAXN + 0] = 2.0 * x[0]
    elif code == 2:
        F[2 * MAXN + 2] = 1.0
        F[2 * MAXN + 3] = x[0]
        D[(2 * MAXN + 3) * MAXN + 0] = 1.0
    elif code == 3:
        F[1 * MAXN + 2] = x[0]
        F[1 * MAXN + 3] = x[2]
        D[(1 * MAXN + 2) * MAXN + 0] = 1.0
        D[(1 * MAXN + 3) * MAXN + 2] = 1.0


cdef inline void _ham_rhs(int code, int n, int m, const double* x, const double* p,
                          double* dx, double* dp) noexcept nogil:
    # Hand-expanded H(x, p) = 1/2 sum_i (p.f_i(x))^2 for each catalog frame;
    # must match the generic contraction used by the numpy backend.
    cdef double u1, u2, u3, a
    if code == 0:
        u1 = p[0]
        u2 = p[1] + x[0] * p[2]
        dx[0] = u1
        dx[1] = u2
        dx[2] = u2 * x[0]
        dp[0] = -(u2 * p[2])
        dp[1] = 0.0
        dp[2] = 0.0
    elif code == 1:
        a = x[0] * x[0]
        u1 = p[0]
        u2 = p[1] + a * p[2]
        dx[0] = u1
        dx[1] = u2
        dx[2] = u2 * a
        dp[0] = -(u2 * p[2] * (2.0 * x[0]))
        dp[1] = 0.0
        dp[2] = 0.0
    elif code == 2:
        u1 = p[0]
        u2 = p[1]
        u3 = p[2] + x[0] * p[3]
        dx[0] = u1
        dx[1] = u2
        dx[2] = u3
        dx[3] = u3 * x[0]
        dp[0] = -(u3 * p[3])
        dp[1] = 0.0
        dp[2] = 0.0
        dp[3] = 0.0
    else:
        u1 = p[0]
        u2 = p[1] + x[0] * p[2] + x[2] * p[3]
        dx[0] = u1
        dx[1] = u2
        dx[2] = u2 * x[0]
        dx[3] = u2 * x[2]
        dp[0] = -(u2 * p[2])
        dp[1] = 0.0
        dp[2] = -(u2 * p[3])
        dp[3] = 0.0


cdef int _ham_step(int code, int n, int m, double h, double* x, double* p) noexcept nogil:
    cdef double k1x[MAXN], k1p[MAXN], k2x[MAXN], k2p[MAXN]
    cdef double k3x[MAXN], k3p[MAXN], k4x[MAXN], k4p[MAXN]
    cdef double tx[MAXN], tp[MAXN]
    cdef int k
    _ham_rhs(code, n, m, x, p, k1x, k1p)
    for k in range(n):
        tx[k] = x[k] + 0.5 * h * k1x[k]
        tp[k] = p[k] + 0.5 * h * k1p[k]
    _ham_rhs(code, n, m, tx, tp, k2x, k2p)
    for k in range(n):
        tx[k] = x[k] + 0.5 * h * k2x[k]
        tp[k] = p[k] + 0.5 * h * k2p[k]
    _ham_rhs(code, n, m, tx, tp, k3x, k3p)
    for k in range(n):
        tx[k] = x[k] + h * k3x[k]
        tp[k] = p[k] + h * k3p[k]
    _ham_rhs(code, n, m, tx, tp, k4x, k4p)
    for k in range(n):
        x[k] = x[k] + h / 6.0 * (k1x[k] + 2.0 * k2x[k] + 2.0 * k3x[k] + k4x[k])
        p[k] = p[k] + h / 6.0 * (k1p[k] + 2.0 * k2p[k] + 2.0 * k3p[k] + k4p[k])
        if not (isfinite(x[k]) and isfinite(p[k])):
            return -1
    return 0


def ham_endpoints(int code, const double[:, ::1] X0, const double[:, ::1] P0, int steps, double t_end=1.0):
    """Endpoints ``(x(t_end), p(t_end))`` of the Hamiltonian flow for a batch.

    Rows that blow up are returned as NaN.
    """
    cdef int n, m
    if _dims(code, &n, &m) < 0:
        raise ValueError(f"unknown kernel code {code}")
    cdef Py_ssize_t B = X0.shape[0], b
    cdef int s, k, bad
    cdef double h = t_end / steps
    cdef double x[MAXN]
    cdef double p[MAXN]
    xs_np = np.empty((B, n))
    ps_np = np.empty((B, n))
    cdef double[:, ::1] xo = xs_np
    cdef double[:, ::1] po = ps_np
    with nogil:
        for b in range(B):
            for k in range(n):
                x[k] = X0[b, k]
                p[k] = P0[b, k]
            bad = 0
            for s in range(steps):
                if _ham_step(code, n, m, h, x, p) < 0:
                    bad = 1
                    break
            for k in range(n):
                if bad:
                    xo[b, k] = 0.0 / 0.0
                    po[b, k] = 0.0 / 0.0
                else:
                    xo[b, k] = x[k]
                    po[b, k] = p[k]
    return xs_np, ps_np


def ham_trajectory(int code, const double[::1] x0, const double[::1] p0, int steps, double t_end=1.0):
    """Full trajectory on ``steps + 1`` uniform nodes; returns (xs, ps, ok)."""
    cdef int n, m
    if _dims(code, &n, &m) < 0:
        raise ValueError(f"unknown kernel code {code}")
    cdef double h = t_end / steps
    cdef double x[MAXN]
    cdef double p[MAXN]
    cdef int s, k, ok = 1
    xs_np = np.full((steps + 1, n), np.nan)
    ps_np = np.full((steps + 1, n), np.nan)
    cdef double[:, ::1] xs = xs_np
    cdef double[:, ::1] ps = ps_np
    with nogil:
        for k in range(n):
            x[k] = x0[k]
            p[k] = p0[k]
            xs[0, k] = x[k]
            ps[0, k] = p[k]
        for s in range(steps):
            if _ham_step(code, n, m, h, x, p) < 0:
                ok = 0
                break
            for k in range(n):
                xs[s + 1, k] = x[k]
                ps[s + 1, k] = p[k]
    return xs_np, ps_np, bool(ok)


cdef inline void _ctrl_rhs(int code, int n, int m, const double* u, const double* x,
                           const double* P, const double* p, int want_phi, int want_p,
                           double* dx, double* dP, double* dp) noexcept nogil:
    # x' = sum u_i f_i(x); Phi' = A Phi; p' = -A^T p with A = sum u_i Df_i(x)
    cdef double F[MAXM * MAXN]
    cdef double D[MAXM * MAXN * MAXN]
    cdef double A[MAXN * MAXN]
    cdef int i, k, l, j
    cdef double s
    _frame(code, x, F, D)
    for k in range(n):
        s = 0.0
        for i in range(m):
            s += u[i] * F[i * MAXN + k]
        dx[k] = s
    if not (want_phi or want_p):
        return
    for k in range(n):
        for l in range(n):
            s = 0.0
            for i in range(m):
                s += u[i] * D[(i * MAXN + k) * MAXN + l]
            A[k * MAXN + l] = s
    if want_phi:
        for k in range(n):
            for j in range(n):
                s = 0.0
                for l in range(n):
                    s += A[k * MAXN + l] * P[l * MAXN + j]
                dP[k * MAXN + j] = s
    if want_p:
        for l in range(n):
            s = 0.0
            for k in range(n):
                s += A[k * MAXN + l] * p[k]
            dp[l] = -s


def controlled_flow(int code, const double[::1] x0, const double[:, ::1] U, p0=None, bint want_phi=False):
    """RK4 along a control grid ``U`` of shape ``(N+1, m)`` on ``[0, 1]``.

    Controls are linearly interpolated between nodes (midpoint stages use
    the node average). Returns ``(xs, ps, phis, ok)``; ``ps``/``phis`` are
    None unless requested.
    """
    cdef int n, m
    if _dims(code, &n, &m) < 0:
        raise ValueError(f"unknown kernel code {code}")
    cdef Py_ssize_t N = U.shape[0] - 1
    cdef double h = 1.0 / N
    cdef int want_p = p0 is not None
    cdef double x[MAXN], p[MAXN], P[MAXN * MAXN]
    cdef double tx[MAXN], tp[MAXN], tP[MAXN * MAXN]
    cdef double kx[4][MAXN], kp[4][MAXN], kP[4][MAXN * MAXN]
    cdef double u0[MAXM], um[MAXM], u1[MAXM]
    cdef double* ust
    cdef double c
    cdef Py_ssize_t s
    cdef int k, i, st, ok = 1
    cdef const double[::1] p0v
    xs_np = np.full((N + 1, n), np.nan)
    cdef double[:, ::1] xs = xs_np
    ps_np = np.full((N + 1, n), np.nan) if want_p else np.empty((1, n))
    cdef double[:, ::1] ps = ps_np
    phis_np = np.full((N + 1, n, n), np.nan) if want_phi else np.empty((1, n, n))
    cdef double[:, :, ::1] phis = phis_np
    if want_p:
        p0v = np.ascontiguousarray(p0, dtype=np.float64)
    for k in range(n):
        x[k] = x0[k]
        p[k] = p0v[k] if want_p else 0.0
        for i in range(n):
            P[k * MAXN + i] = 1.0 if k == i else 0.0
    with nogil:
        for k in range(n):
            xs[0, k] = x[k]
            if want_p:
                ps[0, k] = p[k]
            if want_phi:
                for i in range(n):
                    phis[0, k, i] = P[k * MAXN + i]
        for s in range(N):
            for i in range(m):
                u0[i] = U[s, i]
                u1[i] = U[s + 1, i]
                um[i] = 0.5 * (u0[i] + u1[i])
            for st in range(4):
                if st == 0:
                    c = 0.0
                    ust = u0
                elif st == 3:
                    c = h
                    ust = u1
                else:
                    c = 0.5 * h
                    ust = um
                for k in range(n):
                    if st == 0:
                        tx[k] = x[k]
                        tp[k] = p[k]
                    else:
                        tx[k] = x[k] + c * kx[st - 1][k]
                        tp[k] = p[k] + c * kp[st - 1][k]
                    if want_phi:
                        for i in range(n):
                            if st == 0:
                                tP[k * MAXN + i] = P[k * MAXN + i]
                            else:
                                tP[k * MAXN + i] = P[k * MAXN + i] + c * kP[st - 1][k * MAXN + i]
                _ctrl_rhs(code, n, m, ust, tx, tP, tp, want_phi, want_p, kx[st], kP[st], kp[st])
            for k in range(n):
                x[k] = x[k] + h / 6.0 * (kx[0][k] + 2.0 * kx[1][k] + 2.0 * kx[2][k] + kx[3][k])
                if want_p:
                    p[k] = p[k] + h / 6.0 * (kp[0][k] + 2.0 * kp[1][k] + 2.0 * kp[2][k] + kp[3][k])
                if want_phi:
                    for i in range(n):
                        P[k * MAXN + i] = P[k * MAXN + i] + h / 6.0 * (
                            kP[0][k * MAXN + i] + 2.0 * kP[1][k * MAXN + i]
                            + 2.0 * kP[2][k * MAXN + i] + kP[3][k * MAXN + i])
                if not isfinite(x[k]):
                    ok = 0
            if not ok:
                break
            for k in range(n):
                xs[s + 1, k] = x[k]
                if want_p:
                    ps[s + 1, k] = p[k]
                if want_phi:
                    for i in range(n):
                        phis[s + 1, k, i] = P[k * MAXN + i]
    return (xs_np, ps_np if want_p else None, phis_np if want_phi else None, bool(ok))
