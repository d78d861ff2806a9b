"""Normal extremals, the exponential map, and length/energy of horizontal paths."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .errors import NonFinite
from .frames import ControlFrame

DEFAULT_STEPS = 1000


def hamiltonian(frame, x, p):
    """``H(x, p) = 1/2 sum_i (p . f_i(x))^2``; broadcasts over leading axes."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    u = np.einsum("...k,...ik->...i", p, frame.fields(x))
    return 0.5 * np.sum(u * u, axis=-1)


def controls_of(frame, xs, ps):
    """Normal controls ``u_i = p . f_i(x)`` at every node."""
    return np.einsum("...k,...ik->...i", ps, frame.fields(xs))


@dataclass(frozen=True, eq=False)
class NormalExtremal:
    frame: ControlFrame
    grid: np.ndarray
    xs: np.ndarray
    ps: np.ndarray
    controls: np.ndarray

    @property
    def x0(self):
        return self.xs[0]

    @property
    def p0(self):
        return self.ps[0]

    @property
    def endpoint(self):
        return self.xs[-1]

    def hamiltonian_values(self):
        return hamiltonian(self.frame, self.xs, self.ps)

    def energy_drift(self):
        """Max relative deviation of ``H`` from its initial value."""
        H = self.hamiltonian_values()
        return float(np.max(np.abs(H - H[0])) / max(H[0], 1e-12))

    def at(self, t):
        """Point at time ``t``, linear between nodes."""
        return np.array([np.interp(t, self.grid, self.xs[:, k]) for k in range(self.frame.n)])


@dataclass(frozen=True, eq=False)
class HorizontalPath:
    """Path generated by controls ``u(t_k)`` from ``x0``.

    Controls are linearly interpolated between the uniform nodes of ``[0, 1]``.
    """

    frame: ControlFrame
    x0: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        object.__setattr__(self, "controls", np.atleast_2d(np.asarray(self.controls, dtype=float)))
        if self.controls.shape[1] != self.frame.m:
            raise ValueError("controls must have shape (N+1, m)")
        if self.controls.shape[0] < 2:
            raise ValueError("need at least two control nodes")

    @classmethod
    def constant(cls, frame, x0, u, steps=DEFAULT_STEPS):
        U = np.tile(np.asarray(u, dtype=float), (steps + 1, 1))
        return cls(frame, x0, U)

    @classmethod
    def from_function(cls, frame, x0, u_of_t, steps=DEFAULT_STEPS):
        t = np.linspace(0.0, 1.0, steps + 1)
        U = np.array([np.asarray(u_of_t(s), dtype=float) for s in t])
        return cls(frame, x0, U)

    @property
    def grid(self):
        return np.linspace(0.0, 1.0, self.controls.shape[0])

    @cached_property
    def trajectory(self):
        xs, _, _, ok = kernels.controlled_flow(self.frame, self.x0, self.controls)
        if not ok:
            raise NonFinite(f"horizontal path blew up on frame {self.frame.name!r}")
        return xs

    @property
    def endpoint(self):
        return self.trajectory[-1]

    def is_constant(self, tol=0.0):
        return bool(np.max(np.abs(self.controls)) <= tol)

    def horizontality_residual(self):
        return horizontality_residual(self.frame, self.trajectory, self.controls)


def horizontality_residual(frame, xs, controls):
    """Max defect of ``x' = sum u_i f_i(x)`` at interior nodes.

    The derivative uses the fourth-order five-point stencil, so for an RK4
    trajectory the defect is ``O(h^4)``.
    """
    xs = np.asarray(xs)
    h = 1.0 / (len(xs) - 1)
    dx = (-xs[4:] + 8.0 * xs[3:-1] - 8.0 * xs[1:-3] + xs[:-4]) / (12.0 * h)
    rhs = np.einsum("bi,bik->bk", np.asarray(controls)[2:-2], frame.fields(xs[2:-2]))
    return float(np.max(np.abs(dx - rhs)))


def flow_extremal(frame, x0, p0, steps=DEFAULT_STEPS, backend=None):
    """RK4 integration of the normal Hamiltonian system on ``[0, 1]``."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    xs, ps, ok = kernels.ham_trajectory(frame, x0, p0, steps, backend=backend)
    if not ok:
        raise NonFinite(f"normal extremal blew up from x0={np.asarray(x0)}, p0={np.asarray(p0)}")
    grid = np.linspace(0.0, 1.0, steps + 1)
    return NormalExtremal(frame, grid, xs, ps, controls_of(frame, xs, ps))


def exp_map(frame, x0, p0, steps=DEFAULT_STEPS, backend=None):
    """Sub-Riemannian exponential ``exp_x0(p0)``: endpoint of the normal extremal."""
    x0 = np.asarray(x0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    if not np.any(p0):
        return x0.copy()
    x, _ = kernels.ham_endpoints(frame, x0[None], p0[None], steps, backend=backend)
    if not np.isfinite(x).all():
        raise NonFinite(f"exp map blew up at p0={p0}")
    return x[0]


def exp_batch(frame, X0, P0, steps=DEFAULT_STEPS, backend=None):
    """Vectorised ``exp``; rows that blow up come back as NaN."""
    x, _ = kernels.ham_endpoints(frame, X0, P0, steps, backend=backend)
    return x


def length_energy(path):
    """``(int |u| dt, int |u|^2 dt)`` by the composite trapezoid rule."""
    U = np.asarray(path.controls, dtype=float)
    grid = np.linspace(0.0, 1.0, U.shape[0])
    speed = np.linalg.norm(U, axis=1)
    return float(np.trapezoid(speed, grid)), float(np.trapezoid(speed * speed, grid))
