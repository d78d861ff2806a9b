"""Pure numpy implementation of the RK4 kernels.

Works for any :class:`~srotlab.frames.ControlFrame` (catalog or custom).
Batched Hamiltonian flows are vectorised over the batch axis, so the cost
of a flow is dominated by ``4 * steps`` frame evaluations regardless of
batch size.
"""

import numpy as np


def _ham_rhs(frame, x, p):
    F = frame.fields(x)  # (B, m, n)
    J = frame.jacobians(x)  # (B, m, n, n)
    u = np.einsum("bk,bik->bi", p, F)
    dx = np.einsum("bi,bik->bk", u, F)
    dp = -np.einsum("bi,bk,bikl->bl", u, p, J)
    return dx, dp


def ham_endpoints(frame, X0, P0, steps, t_end=1.0):
    x = np.array(X0, dtype=float, ndmin=2)
    p = np.array(P0, dtype=float, ndmin=2)
    h = t_end / steps
    with np.errstate(all="ignore"):
        for _ in range(steps):
            k1x, k1p = _ham_rhs(frame, x, p)
            k2x, k2p = _ham_rhs(frame, x + 0.5 * h * k1x, p + 0.5 * h * k1p)
            k3x, k3p = _ham_rhs(frame, x + 0.5 * h * k2x, p + 0.5 * h * k2p)
            k4x, k4p = _ham_rhs(frame, x + h * k3x, p + h * k3p)
            x = x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            p = p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
    bad = ~(np.isfinite(x).all(axis=1) & np.isfinite(p).all(axis=1))
    x[bad] = np.nan
    p[bad] = np.nan
    return x, p


def ham_trajectory(frame, x0, p0, steps, t_end=1.0):
    n = frame.n
    h = t_end / steps
    xs = np.full((steps + 1, n), np.nan)
    ps = np.full((steps + 1, n), np.nan)
    x = np.array(x0, dtype=float).reshape(1, n)
    p = np.array(p0, dtype=float).reshape(1, n)
    xs[0], ps[0] = x[0], p[0]
    with np.errstate(all="ignore"):
        for s in range(steps):
            k1x, k1p = _ham_rhs(frame, x, p)
            k2x, k2p = _ham_rhs(frame, x + 0.5 * h * k1x, p + 0.5 * h * k1p)
            k3x, k3p = _ham_rhs(frame, x + 0.5 * h * k2x, p + 0.5 * h * k2p)
            k4x, k4p = _ham_rhs(frame, x + h * k3x, p + h * k3p)
            x = x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            p = p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
            if not (np.isfinite(x).all() and np.isfinite(p).all()):
                return xs, ps, False
            xs[s + 1], ps[s + 1] = x[0], p[0]
    return xs, ps, True


def _ctrl_rhs(frame, u, x, P, p):
    F = frame.fields(x)
    dx = u @ F
    if P is None and p is None:
        return dx, None, None
    A = np.einsum("i,ikl->kl", u, frame.jacobians(x))
    dP = A @ P if P is not None else None
    dp = -(A.T @ p) if p is not None else None
    return dx, dP, dp


def controlled_flow(frame, x0, U, p0=None, want_phi=False):
    U = np.asarray(U, dtype=float)
    N = U.shape[0] - 1
    n = frame.n
    h = 1.0 / N
    want_p = p0 is not None
    xs = np.full((N + 1, n), np.nan)
    ps = np.full((N + 1, n), np.nan) if want_p else None
    phis = np.full((N + 1, n, n), np.nan) if want_phi else None
    x = np.array(x0, dtype=float)
    p = np.array(p0, dtype=float) if want_p else None
    P = np.eye(n) if want_phi else None
    xs[0] = x
    if want_p:
        ps[0] = p
    if want_phi:
        phis[0] = P

    def add(a, c, b):
        return None if a is None else a + c * b

    with np.errstate(all="ignore"):
        for s in range(N):
            u0, u1 = U[s], U[s + 1]
            um = 0.5 * (u0 + u1)
            k1 = _ctrl_rhs(frame, u0, x, P, p)
            k2 = _ctrl_rhs(frame, um, x + 0.5 * h * k1[0], add(P, 0.5 * h, k1[1]), add(p, 0.5 * h, k1[2]))
            k3 = _ctrl_rhs(frame, um, x + 0.5 * h * k2[0], add(P, 0.5 * h, k2[1]), add(p, 0.5 * h, k2[2]))
            k4 = _ctrl_rhs(frame, u1, x + h * k3[0], add(P, h, k3[1]), add(p, h, k3[2]))
            x = x + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
            if want_p:
                p = p + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
            if want_phi:
                P = P + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
            if not np.isfinite(x).all():
                return xs, ps, phis, False
            xs[s + 1] = x
            if want_p:
                ps[s + 1] = p
            if want_phi:
                phis[s + 1] = P
    return xs, ps, phis, True
