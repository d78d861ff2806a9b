"""Singular (abnormal) horizontal paths.

A path is singular when the differential of the end-point map is not onto.
Two routes are used and cross-checked:

* the controllability Gramian ``int B B^T dt`` with
  ``B(t) = Phi(1) Phi(t)^-1 F(x(t))^T`` from the variational equation;
* an adjoint covector ``p(t)``, solving ``p' = -A(t)^T p``, that annihilates
  every frame field along the path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NonFinite, WrongDimension
from .frames import lie_bracket, martinet_set_membership
from .geodesics import HorizontalPath

GRAMIAN_TOL = 1e-7
SUBGRID = 64


def _variational(frame, path, p0=None):
    xs, ps, phis, ok = kernels.controlled_flow(frame, path.x0, path.controls, p0=p0, want_phi=True)
    if not ok or not np.isfinite(phis).all():
        raise NonFinite(f"variational equation blew up along a path on {frame.name!r}")
    return xs, ps, phis


def gramian(frame, path):
    """Controllability Gramian of the end-point map at ``path``."""
    xs, _, phis = _variational(frame, path)
    Ft = np.transpose(frame.fields(xs), (0, 2, 1))  # (N+1, n, m)
    B = np.einsum("kl,tlm->tkm", phis[-1], np.linalg.solve(phis, Ft))
    BBt = np.einsum("tkm,tlm->tkl", B, B)
    return np.trapezoid(BBt, path.grid, axis=0)


def endpoint_rank(frame, path, tol=GRAMIAN_TOL):
    """Rank of the Gramian; singular values below ``tol * sigma_max`` count as zero.

    A constant path has Gramian ``F^T F`` at its base point, hence rank ``m``.
    """
    s = np.linalg.svd(gramian(frame, path), compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def is_singular(frame, path, tol=GRAMIAN_TOL):
    return endpoint_rank(frame, path, tol) < frame.n


@dataclass
class AbnormalCertificate:
    path: HorizontalPath
    p0: np.ndarray
    adjoint: np.ndarray
    residual: float
    null_basis: np.ndarray
    transport_defect: float
    goh_residual: float | None = None
    notes: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "p0": self.p0.tolist(),
            "p1": self.adjoint[-1].tolist(),
            "residual": self.residual,
            "transport_defect": self.transport_defect,
            "null_dim": int(self.null_basis.shape[1]),
            "goh_residual": self.goh_residual,
        }


def _subgrid(N):
    return np.unique(np.linspace(0, N, min(SUBGRID, N + 1)).round().astype(int))


def _annihilation(frame, xs, ps):
    u = np.einsum("tk,tik->ti", ps, frame.fields(xs))
    return float(np.max(np.abs(u) / np.linalg.norm(ps, axis=1)[:, None]))


def _normalise_sign(p):
    k = int(np.argmax(np.abs(p)))
    return p / np.linalg.norm(p) * np.sign(p[k])


def abnormal_certificate(frame, path, tol=GRAMIAN_TOL):
    """Adjoint lift annihilating the frame, or ``None`` if the path is regular.

    ``p(0)`` is the least singular direction of the stacked constraints
    ``p0^T Phi(t_k)^-1 f_i(x(t_k)) = 0`` on a sub-grid; the lift is then
    integrated as an ODE and compared with its closed form ``Phi(t)^-T p0``.
    """
    if endpoint_rank(frame, path, tol) == frame.n:
        return None
    xs, _, phis = _variational(frame, path)
    ks = _subgrid(len(xs) - 1)
    Ft = np.transpose(frame.fields(xs[ks]), (0, 2, 1))
    M = np.linalg.solve(phis[ks], Ft)  # (K, n, m)
    W = np.transpose(M, (1, 0, 2)).reshape(frame.n, -1)
    U, s, _ = np.linalg.svd(W, full_matrices=True)
    s_full = np.concatenate([s, np.zeros(frame.n - len(s))])
    null = s_full <= tol * max(s_full[0], 1e-300)
    if not null.any():
        null[-1] = True
    basis = U[:, null]
    p0 = _normalise_sign(basis[:, -1] if basis.shape[1] == 1 else basis[:, 0])
    _, ps, _ = _variational(frame, path, p0=p0)
    closed = np.linalg.solve(np.transpose(phis[-1]), p0)
    return AbnormalCertificate(
        path=path,
        p0=p0,
        adjoint=ps,
        residual=_annihilation(frame, xs, ps),
        null_basis=basis,
        transport_defect=float(np.linalg.norm(ps[-1] - closed)),
    )


def _bracket_columns(frame, x):
    return [lie_bracket(frame, i + 1, j + 1, x) for i in range(frame.m) for j in range(i + 1, frame.m)]


def goh_residual(frame, cert):
    """Smallest normalised pairing of a lift with ``[f_i, f_j]`` over the null space.

    Returns ``(residual, p0)`` for the minimising combination of the null basis.
    """
    path = cert.path
    xs, _, phis = _variational(frame, path)
    ks = _subgrid(len(xs) - 1)
    cols = []
    for k in ks:
        G = np.column_stack(_bracket_columns(frame, xs[k]))
        cols.append(np.linalg.solve(phis[k], G))
    W = np.hstack(cols)  # p(t_k) . g = p0^T Phi(t_k)^-1 g
    Nb = cert.null_basis
    _, _, Vt = np.linalg.svd(Nb.T @ W @ W.T @ Nb)
    p0 = _normalise_sign(Nb @ Vt[-1])
    _, ps, _ = _variational(frame, path, p0=p0)
    worst = 0.0
    for k in range(len(xs)):
        G = np.column_stack(_bracket_columns(frame, xs[k]))
        worst = max(worst, float(np.max(np.abs(ps[k] @ G)) / np.linalg.norm(ps[k])))
    return worst, p0


def goh_test(frame, cert, tol=1e-8):
    """True iff some abnormal lift also annihilates ``[Delta, Delta]`` along the path."""
    res, p0 = goh_residual(frame, cert)
    cert.goh_residual = res
    cert.notes["goh_p0"] = p0.tolist()
    return res < tol


def dim3_singular_classifier(frame, path, tol=1e-8):
    """In rank 2 on a 3-manifold a nonconstant path is singular iff it stays in the Martinet set."""
    if frame.n != 3 or frame.m != 2:
        raise WrongDimension(f"classifier needs n=3, m=2; frame {frame.name!r} has n={frame.n}, m={frame.m}")
    xs = path.trajectory
    return all(martinet_set_membership(frame, x, tol) for x in xs)
