"""Sub-Riemannian distance by covector shooting, with a direct-control fallback.

Shooting solves ``exp_x(p) = y`` for the initial covector ``p``. Every
converged root gives a normal geodesic of energy ``2 H(x, p)``; the
distance is the square root of the smallest such energy.

Starts are laid out in split coordinates ``p = G u + N c``: the controls
``u`` sit on a circle (sphere) whose radius is a ball-box estimate of the
distance, and the annihilator part ``c`` runs over a grid scaled by the
bracket strength, because the turning rate of a geodesic is set by ``c``
and not by the size of ``y - x``. All candidates are refined by
Levenberg-damped Gauss-Newton on a coarse integrator, and the
lowest-energy coarse roots are polished at full resolution. Starts advance
in lock-step so one kernel call serves the whole batch."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .errors import CutLocusPoint, NoConvergence
from .frames import _word_field, bracket_words, lie_bracket
from .geodesics import DEFAULT_STEPS, hamiltonian

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ShootingOptions:
    """Solver settings; every field enters the distance-cache key."""

    steps: int = DEFAULT_STEPS
    n_directions: int = 8
    radial_scales: tuple = (1.0,)
    vertical_grid: tuple = (0.0, 1.0, -1.0, 2.5, -2.5, 4.0, -4.0, 5.25, -5.25, 6.0, -6.0, 6.2, -6.2)
    wide_grid: tuple = (9.0, -9.0, 13.0, -13.0)
    prescreen_steps: int = 30
    coarse_steps: int = 30
    coarse_iter: int = 40
    max_starts: int = 48
    coarse_window: float = 0.05
    endpoint_tol: float = 1e-8
    max_iter: int = 100
    fd_step: float = 1e-7
    energy_rtol: float = 1e-6
    sep_tol: float = 1e-3
    direct: bool = True
    direct_segments: int = 20
    rho_schedule: tuple = (1e2, 1e3, 1e4, 1e5, 1e6)
    direct_tol: float = 1e-5

    def as_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


DEFAULT_OPTIONS = ShootingOptions()


@dataclass
class DistanceResult:
    value: float
    covectors: list
    method: str
    endpoint_error: float
    multiplicity: int
    converged: bool = True
    energies: list = field(default_factory=list)
    iterations: int = 0

    @property
    def covector(self):
        return self.covectors[0] if self.covectors else None

    def to_json(self):
        return {
            "value": self.value,
            "covectors": [np.asarray(p).tolist() for p in self.covectors],
            "method": self.method,
            "endpoint_error": self.endpoint_error,
            "multiplicity": self.multiplicity,
            "converged": self.converged,
            "energies": [float(e) for e in self.energies],
            "iterations": self.iterations,
        }


def sphere_directions(m, count=8, seed=0):
    """Deterministic unit directions in ``R^m``.

    On the circle these are ``count`` equally spaced angles; in higher
    dimension the ``2m`` axis directions and the cube diagonals, padded or
    truncated to ``count`` with seeded Gaussian draws.
    """
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m == 2:
        th = 2.0 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(th), np.sin(th)])
    base = [np.eye(m), -np.eye(m), np.array(list(itertools.product((-1.0, 1.0), repeat=m)))]
    dirs = np.vstack(base)
    if len(dirs) < count:
        extra = np.random.default_rng(seed).standard_normal((count - len(dirs), m))
        dirs = np.vstack([dirs, extra])
    dirs = dirs[: max(count, 2 * m)]
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def covector_chart(frame, x, probes=None):
    """Split ``T*_x`` into horizontal and annihilator coordinates.

    Returns ``(G, N, b)``: ``p = G u + N c`` has controls ``p . f_i = u_i``;
    the columns of ``N`` span the annihilator of the distribution; ``b[j]``
    is the largest pairing of ``N[:, j]`` with a first bracket, taken over
    ``x`` and the optional ``probes``. It is the rate at which a unit of
    ``c_j`` turns the controls.
    """
    F = frame.fields(x)
    G = F.T @ np.linalg.inv(F @ F.T)
    _, _, Vt = np.linalg.svd(F)
    N = Vt[frame.m :].T
    pts = [x] if probes is None else [x, *probes]
    cols = [
        lie_bracket(frame, i + 1, j + 1, z)
        for z in pts
        for i in range(frame.m)
        for j in range(i + 1, frame.m)
    ]
    b = np.max(np.abs(N.T @ np.column_stack(cols)), axis=1) if cols else np.zeros(N.shape[1])
    weak = b < 0.1
    if weak.any():
        # directions reached only at depth three
        words = [w for w in bracket_words(frame.m, 3) if len(w) == 3]
        cols = [_word_field(frame, w)(z) for z in pts for w in words]
        b3 = np.max(np.abs(N.T @ np.column_stack(cols)), axis=1)
        b[weak] = np.maximum(b[weak], b3[weak])
    return G, N, b


def distance_estimate(frame, x, y, N=None, b=None):
    """Ball-box style scale: horizontal least squares plus sqrt of the vertical gap."""
    d = y - x
    F = frame.fields(x)
    u = np.linalg.lstsq(F.T, d, rcond=None)[0]
    if N is None:
        _, N, b = covector_chart(frame, x)
    v = np.abs(N.T @ d)
    return max(float(np.sqrt(u @ u + 4.0 * np.pi * np.sum(v * np.maximum(b, 1e-2)))), 1e-3)


def _start_groups(frame, x, y, opts):
    """Candidate covectors grouped by (radius, vertical level)."""
    probes = [x + s * (y - x) for s in (0.25, 0.5, 0.75, 1.0)]
    G, N, b = covector_chart(frame, x, probes)
    dest = distance_estimate(frame, x, y, N, b)
    dirs = sphere_directions(frame.m, opts.n_directions)
    vscale = 1.0 / np.maximum(b, 0.1)
    grid = opts.vertical_grid
    if N.shape[1] >= 2:
        # higher step: the annihilator part is not a pure rotation rate
        grid = grid + tuple(opts.wide_grid)
    levels = np.array(list(itertools.product(grid, repeat=N.shape[1])))
    groups = []
    for r in opts.radial_scales:
        horiz = (r * dest) * dirs @ G.T
        for lv in levels:
            groups.append(horiz + N @ (lv * vscale))
    return groups


def _rownorm(r):
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.linalg.norm(r, axis=1)
    out[~np.isfinite(out)] = np.inf
    return out


def _gauss_newton(frame, x, y, P, opts, backend=None):
    """Lock-step Levenberg-Gauss-Newton for a batch of starting covectors.

    Returns final covectors, residual norms, and iteration count.
    """
    n = frame.n
    S = len(P)
    P = np.array(P, dtype=float)
    lam = np.full(S, 1e-6)
    X0 = np.broadcast_to(x, (S, n))
    r = kernels.ham_endpoints(frame, X0, P, opts.steps, backend=backend)[0] - y
    res = _rownorm(r)
    active = np.isfinite(res) & (res > 1e-3 * opts.endpoint_tol)
    it = 0
    stall = np.zeros(S, dtype=int)
    checkpoint = res.copy()
    alive = np.ones(S, dtype=bool)
    while it < opts.max_iter and active.any():
        it += 1
        if it % 8 == 0:
            # drop starts that have not halved their residual in 8 iterations
            alive &= res <= 0.8 * checkpoint
            active &= alive
            checkpoint = res.copy()
            if not active.any():
                break
        idx = np.flatnonzero(active)
        k = len(idx)
        Pa = P[idx]
        h = opts.fd_step * np.maximum(1.0, np.linalg.norm(Pa, axis=1))
        pert = (Pa[:, None, :] + h[:, None, None] * np.eye(n)[None]).reshape(k * n, n)
        ends = kernels.ham_endpoints(frame, np.broadcast_to(x, (k * n, n)), pert, opts.steps, backend=backend)[0]
        ends = ends.reshape(k, n, n)
        J = (ends - (r[idx] + y)[:, None, :]) / h[:, None, None]  # J[b, j, :] = d end / d p_j
        J = np.transpose(J, (0, 2, 1))
        JtJ = np.einsum("bki,bkj->bij", J, J)
        Jtr = np.einsum("bki,bk->bi", J, r[idx])
        damp = lam[idx] * (np.trace(JtJ, axis1=1, axis2=2) / n + 1e-12)
        A = JtJ + damp[:, None, None] * np.eye(n)
        with np.errstate(all="ignore"):
            try:
                trial = Pa - np.linalg.solve(A, Jtr[..., None])[..., 0]
            except np.linalg.LinAlgError:
                trial = Pa - np.einsum("bij,bj->bi", np.linalg.pinv(A), Jtr)
        trial[~np.isfinite(trial).all(axis=1)] = Pa[~np.isfinite(trial).all(axis=1)]
        rt = kernels.ham_endpoints(frame, np.broadcast_to(x, (k, n)), trial, opts.steps, backend=backend)[0] - y
        rest = _rownorm(rt)
        better = rest < res[idx]
        acc = idx[better]
        P[acc] = trial[better]
        r[acc] = rt[better]
        res[acc] = rest[better]
        lam[acc] = np.maximum(lam[acc] / 10.0, 1e-12)
        rej = idx[~better]
        lam[rej] = np.maximum(lam[rej] * 4.0, 1e-6)
        stall[rej] += 1
        stall[acc] = 0
        active = alive & np.isfinite(res) & (res > 1e-3 * opts.endpoint_tol) & (lam < 1e8) & (stall < 12)
    return P, res, it


def _midpoints(frame, x, P, steps, backend=None):
    half = max(1, steps // 2)
    return kernels.ham_endpoints(frame, np.broadcast_to(x, (len(P), frame.n)), P, half, t_end=0.5, backend=backend)[0]


def _cluster(frame, x, P, steps, sep_tol, backend=None):
    """Keep one covector per geodesic; geodesics compared at their midpoints."""
    if len(P) == 0:
        return P
    mids = _midpoints(frame, x, P, steps, backend)
    keep = []
    for i in range(len(P)):
        if all(np.linalg.norm(mids[i] - mids[j]) > sep_tol for j in keep):
            keep.append(i)
    return P[keep]


def _unique_rows(P, values, tol):
    keep = []
    for i in range(len(P)):
        if all(np.linalg.norm(P[i] - P[j]) > tol * (1.0 + np.linalg.norm(P[j])) for j in keep):
            keep.append(i)
    return P[keep], values[keep]


def _select_starts(err, sizes, cap):
    """Best candidate of every group, then the best of the rest, up to ``cap``."""
    finite = np.isfinite(err)
    if finite.sum() <= cap:
        return np.flatnonzero(finite)
    chosen = []
    off = 0
    for size in sizes:
        e = err[off : off + size]
        j = int(np.argmin(e))
        if np.isfinite(e[j]):
            chosen.append(off + j)
        off += size
    chosen = sorted(chosen, key=lambda k: err[k])[:cap]
    rest = np.setdiff1d(np.flatnonzero(finite), chosen)
    rest = rest[np.argsort(err[rest], kind="stable")]
    return np.concatenate([np.asarray(chosen, dtype=int), rest[: cap - len(chosen)]])


def shoot(frame, x, y, opts=DEFAULT_OPTIONS, extra_starts=None, backend=None):
    """Multi-start shooting; returns ``(roots, residuals, iterations)`` of the refined starts.

    Stages: coarse prescreen of all candidates (best direction per
    radius/vertical group), Gauss-Newton on the coarse integrator, then
    full-resolution Gauss-Newton from the coarse roots within
    ``coarse_window`` of the lowest coarse energy.
    """
    n = frame.n
    groups = _start_groups(frame, x, y, opts)
    cands = np.vstack(groups)
    ends = kernels.ham_endpoints(
        frame, np.broadcast_to(x, (len(cands), n)), cands, opts.prescreen_steps, backend=backend
    )[0]
    err = _rownorm(ends - y)
    # covectors annihilating the distribution give constant paths with a
    # vanishing shooting Jacobian; never start there
    h2 = 2.0 * hamiltonian(frame, x, cands)
    err[h2 < 1e-6 * np.sum(cands * cands, axis=1)] = np.inf
    cap = opts.max_starts * (4 if n - frame.m >= 2 else 1)
    starts = cands[_select_starts(err, [len(g) for g in groups], cap)]
    if extra_starts is not None and len(extra_starts):
        starts = np.vstack([np.atleast_2d(extra_starts), starts])

    coarse = replace(opts, steps=opts.coarse_steps, endpoint_tol=1e-9, max_iter=opts.coarse_iter)
    Pc, resc, it_c = _gauss_newton(frame, x, y, starts, coarse, backend=backend)
    roots = Pc[resc <= 1e-5 * max(1.0, float(np.linalg.norm(y - x)))]
    en = 2.0 * hamiltonian(frame, x, roots)
    order = np.argsort(en, kind="stable")
    roots, en = _unique_rows(roots[order], en[order], 1e-6)
    extra = np.atleast_2d(extra_starts) if extra_starts is not None and len(extra_starts) else None
    it = it_c
    # refine coarse roots in increasing-energy batches; a refined root counts
    # only if it stayed in the basin of its coarse seed
    lo = 0
    while lo < len(roots):
        hi = lo + int(np.sum(en[lo:] <= en[lo] * (1.0 + opts.coarse_window) + 1e-12))
        hi = max(hi, min(lo + 2, len(roots)))
        P, res, k = _gauss_newton(frame, x, y, roots[lo:hi], opts, backend=backend)
        it += k
        drift = np.abs(2.0 * hamiltonian(frame, x, P) - en[lo:hi]) <= 0.05 * en[lo:hi] + 1e-9
        good = (res <= opts.endpoint_tol) & drift
        if good.any():
            if extra is not None:
                Pe, rese, k = _gauss_newton(frame, x, y, extra, opts, backend=backend)
                P, res, it = np.vstack([P[good], Pe]), np.concatenate([res[good], rese]), it + k
                return P, res, it
            return P[good], res[good], it
        lo = hi
    seeds = starts if extra is None else np.vstack([extra, starts])
    P, res, k = _gauss_newton(frame, x, y, seeds, opts, backend=backend)
    return P, res, it + k


def _minimizers(frame, x, P, res, opts, backend=None):
    ok = res <= opts.endpoint_tol
    if not ok.any():
        return None
    roots = P[ok]
    energies = 2.0 * hamiltonian(frame, x, roots)
    order = np.argsort(energies, kind="stable")
    roots, energies, rres = roots[order], energies[order], res[ok][order]
    emin = energies[0]
    close = energies <= emin * (1.0 + opts.energy_rtol) + 1e-14
    reps = _cluster(frame, x, roots[close], opts.steps, opts.sep_tol, backend)
    return roots, energies, rres, reps


def distance(frame, x, y, opts=DEFAULT_OPTIONS, p_guess=None, backend=None, raise_on_failure=True):
    """``d_SR(x, y)`` with minimizing covectors and diagnostics.

    Raises :class:`NoConvergence` (carrying the best candidate) if neither
    shooting nor the direct fallback meets its endpoint tolerance, unless
    ``raise_on_failure`` is false, in which case the flagged result is
    returned.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.array_equal(x, y):
        return DistanceResult(0.0, [np.zeros(frame.n)], "shooting", 0.0, 1, True, [0.0], 0)

    P, res, it = shoot(frame, x, y, opts, extra_starts=p_guess, backend=backend)
    found = _minimizers(frame, x, P, res, opts, backend)
    if found is not None:
        roots, energies, rres, reps = found
        return DistanceResult(
            value=math.sqrt(energies[0]),
            covectors=list(reps),
            method="shooting",
            endpoint_error=float(rres[0]),
            multiplicity=len(reps),
            energies=[float(e) for e in energies[: len(reps)]],
            iterations=it,
        )

    log.info("shooting failed for %s -> %s on %s; trying direct fallback", x, y, frame.name)
    best = int(np.argmin(res))
    result = DistanceResult(
        value=math.sqrt(2.0 * hamiltonian(frame, x, P[best])) if np.isfinite(res[best]) else math.inf,
        covectors=[P[best]],
        method="shooting",
        endpoint_error=float(res[best]),
        multiplicity=0,
        converged=False,
        iterations=it,
    )
    if opts.direct:
        result = direct_distance(frame, x, y, opts, backend=backend)
        if result.converged or not raise_on_failure:
            return result
    if raise_on_failure:
        raise NoConvergence(f"no geodesic found from {x} to {y} on {frame.name}", result=result)
    return result


# --- direct fallback ----------------------------------------------------------


def _expand(u_seg, K, steps):
    """Piecewise-constant segment controls sampled on ``steps + 1`` nodes."""
    idx = np.minimum((np.arange(steps + 1) * K) // steps, K - 1)
    return u_seg[idx]


def direct_distance(frame, x, y, opts=DEFAULT_OPTIONS, backend=None):
    """Minimise ``energy + rho |E_x(u) - y|^2`` over piecewise-constant controls.

    ``rho`` follows ``opts.rho_schedule``. The penalty multiplier yields a
    covector guess ``p(0) = -rho (E - y)^T dPhi(1)`` that seeds a final
    shooting polish; if the polish converges the result is ``hybrid``.
    """
    K, m = opts.direct_segments, frame.m
    steps = opts.steps - opts.steps % K
    grid = np.linspace(0.0, 1.0, steps + 1)
    seg_of_node = np.minimum((np.arange(steps + 1) * K) // steps, K - 1)

    def evaluate(v, rho, want_grad=True):
        u = v.reshape(K, m)
        U = _expand(u, K, steps)
        xs, _, phis, ok = kernels.controlled_flow(frame, x, U, want_phi=want_grad, backend=backend)
        if not ok:
            return np.inf, np.zeros_like(v), None, None
        E = xs[-1]
        err = E - y
        energy = float(np.sum(u * u) / K)
        val = energy + rho * float(err @ err)
        if not want_grad:
            return val, None, E, None
        # dE/du_{k,i} = int_seg Phi(1) Phi(t)^-1 f_i(x(t)) dt
        Fs = frame.fields(xs)
        Bt = np.linalg.solve(phis, np.transpose(Fs, (0, 2, 1)))  # (N+1, n, m)
        Bt = np.einsum("kl,tlm->tkm", phis[-1], Bt)
        w = np.einsum("k,tkm->tm", err, Bt)
        g = np.zeros((K, m))
        dt = np.diff(grid)
        contrib = 0.5 * (w[1:] + w[:-1]) * dt[:, None]
        np.add.at(g, seg_of_node[:-1], contrib)
        grad = 2.0 * u / K + 2.0 * rho * g
        return val, grad.ravel(), E, phis[-1]

    # straight-chart guess projected on the frame, plus a seeded wiggle:
    # zero controls are a stationary point of the penalised energy
    F0 = frame.fields(x)
    v = np.tile(np.linalg.lstsq(F0.T, y - x, rcond=None)[0], K)
    wiggle = np.random.default_rng(0).standard_normal(K * m)
    v = v + 0.3 * distance_estimate(frame, x, y) * wiggle
    for rho in opts.rho_schedule:
        sol = minimize(
            lambda z: evaluate(z, rho)[:2], v, jac=True, method="L-BFGS-B", options={"maxiter": 400}
        )
        v = sol.x
    val, _, E, phi1 = evaluate(v, opts.rho_schedule[-1])
    u = v.reshape(K, m)
    energy = float(np.sum(u * u) / K)
    err = float(np.linalg.norm(E - y))
    p_seed = -opts.rho_schedule[-1] * (E - y) @ phi1

    polish_opts = replace(opts, direct=False)
    P, res, it = _gauss_newton(frame, x, y, p_seed[None], polish_opts, backend=backend)
    if res[0] <= opts.endpoint_tol:
        value = math.sqrt(2.0 * hamiltonian(frame, x, P[0]))
        # the penalised energy undershoots by O(1/rho); a polished root far
        # above it belongs to another geodesic
        if value <= math.sqrt(energy) * (1.0 + 1e-3):
            return DistanceResult(value, [P[0]], "hybrid", float(res[0]), 1, True, [value**2], it)
    return DistanceResult(
        value=math.sqrt(energy),
        covectors=[p_seed],
        method="direct",
        endpoint_error=err,
        multiplicity=1,
        converged=err <= opts.direct_tol,
        energies=[energy],
        iterations=it,
    )


# --- cut-locus proxy and eikonal residual -----------------------------------


@dataclass
class MultiplicityReport:
    multiplicity: int
    representatives: list
    value: float

    @property
    def cut_locus_proxy(self):
        return self.multiplicity >= 2

    def to_json(self):
        return {
            "multiplicity": self.multiplicity,
            "cut_locus_proxy": self.cut_locus_proxy,
            "value": self.value,
            "representatives": [np.asarray(p).tolist() for p in self.representatives],
        }


def multi_geodesic_probe(frame, x, y, opts=DEFAULT_OPTIONS, backend=None):
    """Count distinct minimizing geodesics from ``x`` to ``y``.

    Uses a denser start set than :func:`distance` (every direction at every
    radius is refined) so that rotational families are sampled.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.array_equal(x, y):
        return MultiplicityReport(1, [np.zeros(frame.n)], 0.0)
    dense = replace(opts, n_directions=max(opts.n_directions, 16), max_starts=max(opts.max_starts, 48))
    P, res, _ = shoot(frame, x, y, dense, backend=backend)
    found = _minimizers(frame, x, P, res, dense, backend)
    if found is None:
        raise NoConvergence(f"probe found no geodesic from {x} to {y}")
    roots, energies, _, reps = found
    return MultiplicityReport(len(reps), list(reps), math.sqrt(energies[0]))


def eikonal_residual(frame, x, y, h=1e-3, opts=DEFAULT_OPTIONS, backend=None):
    """``H(y, grad f(y)) - 1/2`` for ``f = d_SR(x, .)`` with a central-difference gradient."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.array_equal(x, y):
        raise CutLocusPoint("eikonal residual is undefined on the diagonal y = x")
    probe = multi_geodesic_probe(frame, x, y, opts, backend)
    if probe.cut_locus_proxy:
        raise CutLocusPoint(f"{y} has {probe.multiplicity} minimizing geodesics from {x}")
    grad = np.empty(frame.n)
    for k in range(frame.n):
        e = np.zeros(frame.n)
        e[k] = h
        fp = distance(frame, x, y + e, opts, backend=backend).value
        fm = distance(frame, x, y - e, opts, backend=backend).value
        grad[k] = (fp - fm) / (2 * h)
    return float(hamiltonian(frame, y, grad) - 0.5)
