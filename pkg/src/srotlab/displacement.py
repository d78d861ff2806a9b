"""Transport maps from discrete plans, displacement interpolation, Jacobian residuals.

On the moving set the optimal map is ``T(x) = exp_x(-dphi(x)/2)``. Here the
covector ``p_a`` of each source is taken from the minimizing geodesic
``x_a -> T(x_a)`` (solver-exact on the support); a local affine regression
of the potential gives an independent estimate ``-ghat/2`` for cross-checks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .errors import DegenerateNeighborhood, GridTooCoarse, MultiDestinationRow
from .kantorovich import cost_matrix, solve_kantorovich
from .metric import DEFAULT_OPTIONS, distance

log = logging.getLogger(__name__)

STATIC_TOL = 1e-6
PAIRING_TOL = 1e-8


@dataclass(eq=False)
class TransportMapEstimate:
    frame: object
    sources: np.ndarray
    weights: np.ndarray
    targets: np.ndarray
    dest_index: np.ndarray  # -1 on excluded rows
    covectors: np.ndarray
    distances: np.ndarray
    labels: np.ndarray  # "moving" | "static" | "excluded"
    endpoint_errors: np.ndarray
    pairing: np.ndarray  # phi + phi^c at sources that are also target atoms, else NaN
    plan: object = None
    duals: object = None
    ghat: np.ndarray | None = None
    notes: dict = field(default_factory=dict)

    @property
    def moving(self):
        return self.labels == "moving"

    @property
    def static(self):
        return self.labels == "static"

    @property
    def excluded(self):
        return np.flatnonzero(self.labels == "excluded")

    @property
    def destinations(self):
        out = np.full_like(self.sources, np.nan)
        ok = self.dest_index >= 0
        out[ok] = self.targets[self.dest_index[ok]]
        return out

    def consistency_fraction(self, tol=1e-6):
        """Share of moving rows with ``|exp_x(p) - T(x)| <= tol``."""
        mv = self.moving
        if not mv.any():
            return 1.0
        return float(np.mean(self.endpoint_errors[mv] <= tol))


def _pairing(duals, sources, targets):
    out = np.full(len(sources), np.nan)
    if duals is None:
        return out
    lookup = {tuple(y): b for b, y in enumerate(targets)}
    for a, x in enumerate(sources):
        b = lookup.get(tuple(x))
        if b is not None:
            out[a] = duals.phi[a] + duals.phic[b]
    return out


def build_map(
    plan,
    duals,
    frame,
    opts=DEFAULT_OPTIONS,
    table=None,
    static_tol=STATIC_TOL,
    max_excluded=0.05,
    backend=None,
):
    """Per-source destination, minimizing covector and moving/static label.

    Rows of the plan that split mass are labelled ``excluded``; more than
    ``max_excluded`` of them raises :class:`MultiDestinationRow`.
    ``table`` (a :class:`~srotlab.kantorovich.DistanceTable`) supplies
    precomputed covectors; missing ones are solved for.
    """
    X = plan.source.points
    Y = plan.target.points
    N = len(X)
    dests = plan.destinations()
    multi = [a for a, d in enumerate(dests) if len(d) != 1]
    if len(multi) > max_excluded * N:
        raise MultiDestinationRow(f"{len(multi)} of {N} source rows split their mass", rows=multi)
    if multi:
        log.warning("excluding %d multi-destination rows: %s", len(multi), multi)

    dest_index = np.full(N, -1)
    covectors = np.zeros((N, frame.n))
    dist = np.full(N, np.nan)
    labels = np.full(N, "excluded", dtype=object)
    for a, d in enumerate(dests):
        if len(d) != 1:
            continue
        b = d[0]
        dest_index[a] = b
        p = None
        if table is not None and np.isfinite(table.covectors[a, b]).all():
            val, p = table.values[a, b], table.covectors[a, b]
        else:
            r = distance(frame, X[a], Y[b], opts, backend=backend)
            val, p = r.value, r.covector
        dist[a] = val
        if val <= static_tol:
            labels[a] = "static"
        else:
            labels[a] = "moving"
            covectors[a] = p

    errors = np.zeros(N)
    mv = labels == "moving"
    if mv.any():
        ends = kernels.ham_endpoints(frame, X[mv], covectors[mv], opts.steps, backend=backend)[0]
        errors[mv] = np.linalg.norm(ends - Y[dest_index[mv]], axis=1)
    errors[labels == "excluded"] = np.nan
    return TransportMapEstimate(
        frame=frame,
        sources=X,
        weights=plan.source.weights,
        targets=Y,
        dest_index=dest_index,
        covectors=covectors,
        distances=dist,
        labels=labels.astype(str),
        endpoint_errors=errors,
        pairing=_pairing(duals, X, Y),
        plan=plan,
        duals=duals,
    )


# --- potential gradients ------------------------------------------------------


def _affine_fit(P, v, w):
    """Weighted least squares ``v ~ c + g . P``; returns ``(g, rms residual)``."""
    A = np.column_stack([np.ones(len(P)), P])
    sw = np.sqrt(w)
    if np.linalg.matrix_rank(A * sw[:, None], tol=1e-10 * max(1.0, np.abs(P).max())) < A.shape[1]:
        raise DegenerateNeighborhood("neighbours are affinely dependent")
    coef, *_ = np.linalg.lstsq(A * sw[:, None], v * sw, rcond=None)
    fit = A @ coef
    return coef[1:], float(np.sqrt(np.sum(w * (fit - v) ** 2) / np.sum(w)))


def regress_dphi(duals, sources, k=None, r_reg=None):
    """Local affine fit of ``phi`` over the ``k`` nearest source atoms.

    Weights decay as ``(1 - (r/R)^2)^2`` with ``R`` just beyond the farthest
    neighbour. Returns ``(ghat, residuals)``.
    """
    phi = duals.phi if hasattr(duals, "phi") else np.asarray(duals, dtype=float)
    X = np.atleast_2d(np.asarray(sources, dtype=float))
    N, n = X.shape
    k = 2 * n + 2 if k is None else int(k)
    if k < n + 1:
        raise DegenerateNeighborhood(f"need at least n+1={n + 1} neighbours, got k={k}")
    if k > N:
        raise DegenerateNeighborhood(f"k={k} exceeds the {N} available atoms")
    tree = cKDTree(X)
    r, idx = tree.query(X, k=k)
    r = np.atleast_2d(r).reshape(N, k)
    idx = np.atleast_2d(idx).reshape(N, k)
    ghat = np.empty((N, n))
    res = np.empty(N)
    for a in range(N):
        keep = np.ones(k, dtype=bool) if r_reg is None else r[a] <= r_reg
        if keep.sum() < n + 1:
            raise DegenerateNeighborhood(f"atom {a}: only {keep.sum()} neighbours within r_reg={r_reg}")
        R = 1.01 * r[a, keep].max()
        w = (1.0 - (r[a, keep] / R) ** 2) ** 2
        ghat[a], res[a] = _affine_fit(X[idx[a, keep]] - X[a], phi[idx[a, keep]], w)
    return ghat, res


def interior_mask(points, margin=0.15):
    """Atoms at least ``margin`` (fraction of the extent) inside the bounding box on every axis."""
    P = np.asarray(points, dtype=float)
    lo, hi = P.min(axis=0), P.max(axis=0)
    pad = margin * (hi - lo)
    return np.all((P >= lo + pad) & (P <= hi - pad), axis=1)


def direction_agreement(map_est, ghat, mask=None):
    """Cosine between ``-ghat/2`` and the stored covector on moving rows (NaN elsewhere)."""
    cos = np.full(len(map_est.sources), np.nan)
    mv = map_est.moving if mask is None else map_est.moving & mask
    g = -0.5 * ghat[mv]
    p = map_est.covectors[mv]
    cos[mv] = np.sum(g * p, axis=1) / (np.linalg.norm(g, axis=1) * np.linalg.norm(p, axis=1))
    return cos


# --- interpolation ------------------------------------------------------------


@dataclass(eq=False)
class InterpolationResult:
    t_values: list
    clouds: list
    weights: np.ndarray
    source_index: np.ndarray
    target_index: np.ndarray
    covectors: np.ndarray
    diagnostics: list

    def measure(self, k):
        """The interpolant at ``t_values[k]`` as a measure (duplicate atoms are kept apart)."""
        return self.clouds[k], self.weights


def _min_spacing(P):
    if len(P) < 2:
        return math.inf
    d, _ = cKDTree(P).query(P, k=2)
    return float(d[:, 1].min())


def interpolate(map_est, frame, t_list, opts=DEFAULT_OPTIONS, backend=None):
    """``T_t(x) = exp_x(t p)``; static atoms stay put.

    Each support cell of the plan carries its own atom, so split rows move
    along one geodesic per destination. The ``t = 0`` and ``t = 1`` clouds are
    the source and destination atoms themselves.
    """
    t_list = [float(t) for t in t_list]
    if any(t < 0.0 or t > 1.0 for t in t_list):
        raise ValueError("interpolation times must lie in [0, 1]")
    X, Y = map_est.sources, map_est.targets
    src, dst, w, P = [], [], [], []
    for a in range(len(X)):
        if map_est.labels[a] != "excluded":
            src.append(a)
            dst.append(map_est.dest_index[a])
            w.append(map_est.weights[a])
            P.append(map_est.covectors[a])
    if len(map_est.excluded):
        rows, cols, vals = map_est.plan.support()
        for a, b, v in zip(rows, cols, vals):
            if map_est.labels[a] == "excluded":
                src.append(a)
                dst.append(b)
                w.append(v)
                P.append(distance(frame, X[a], Y[b], opts, backend=backend).covector)
    src = np.asarray(src, dtype=int)
    dst = np.asarray(dst, dtype=int)
    P = np.asarray(P, dtype=float).reshape(len(src), frame.n)
    X0 = X[src]
    clouds, diags = [], []
    for t in t_list:
        if t == 0.0:
            cloud = X0.copy()
        elif t == 1.0:
            cloud = Y[dst].copy()
        else:
            cloud = X0.copy()
            mv = np.any(P != 0.0, axis=1)
            if mv.any():
                cloud[mv] = kernels.ham_endpoints(frame, X0[mv], t * P[mv], opts.steps, backend=backend)[0]
        clouds.append(cloud)
        diags.append({"t": t, "min_spacing": _min_spacing(cloud)})
    return InterpolationResult(t_list, clouds, np.asarray(w), src, dst, P, diags)


def split_residual(map_est, interp, k, opts=DEFAULT_OPTIONS, backend=None):
    """Geodesic split at ``t = t_values[k]`` on moving atoms.

    Returns relative residuals of ``d(x,T_t x)^2/t + d(T_t x, T x)^2/(1-t) = d(x, T x)^2``
    and of ``d(x, T_t x) = t d(x, T x)``.
    """
    t = interp.t_values[k]
    if not 0.0 < t < 1.0:
        raise ValueError("split residual needs 0 < t < 1")
    frame = map_est.frame
    split, speed = [], []
    for j, (a, b) in enumerate(zip(interp.source_index, interp.target_index)):
        if not np.any(interp.covectors[j]):
            continue
        x, z, y = map_est.sources[a], interp.clouds[k][j], map_est.targets[b]
        d = distance(frame, x, y, opts, backend=backend).value
        d1 = distance(frame, x, z, opts, backend=backend).value
        d2 = distance(frame, z, y, opts, backend=backend).value
        split.append(abs(d1 * d1 / t + d2 * d2 / (1.0 - t) - d * d) / (d * d))
        speed.append(abs(d1 - t * d))
    return np.asarray(split), np.asarray(speed)


@dataclass
class GeodesicReport:
    t_values: list
    w2_total: float
    w2_from_source: list
    w2_to_target: list
    relative_error: list

    def to_json(self):
        return {
            "t": self.t_values,
            "w2_total": self.w2_total,
            "w2_from_source": self.w2_from_source,
            "w2_to_target": self.w2_to_target,
            "relative_error": self.relative_error,
        }


def geodesic_check(mu, interp, nu, frame, opts=DEFAULT_OPTIONS, cache=None, threads=1):
    """Fresh LP solves of ``W2(mu, mu_t)`` and ``W2(mu_t, nu)`` against ``t W2(mu, nu)``."""
    C = cost_matrix(frame, mu.points, nu.points, opts, cache=cache, threads=threads)
    total = math.sqrt(max(solve_kantorovich(mu, nu, C)[0].cost, 0.0))
    ws, wt, rel = [], [], []
    for k, t in enumerate(interp.t_values):
        cloud = interp.clouds[k]
        wk = interp.weights / interp.weights.sum()
        if t == 0.0:
            w_s, w_t = 0.0, total
        elif t == 1.0:
            w_s, w_t = total, 0.0
        else:
            Cs = cost_matrix(frame, mu.points, cloud, opts, cache=cache, threads=threads)
            Ct = cost_matrix(frame, cloud, nu.points, opts, cache=cache, threads=threads)
            w_s = math.sqrt(max(solve_kantorovich(mu.weights, wk, Cs)[0].cost, 0.0))
            w_t = math.sqrt(max(solve_kantorovich(wk, nu.weights, Ct)[0].cost, 0.0))
        ws.append(w_s)
        wt.append(w_t)
        rel.append(abs(w_s - t * total) / total if total > 0 else 0.0)
        interp.diagnostics[k].update(w2_from_source=w_s, w2_to_target=w_t)
    return GeodesicReport(list(interp.t_values), total, ws, wt, rel)


@dataclass
class ContinuityReport:
    t: float
    injectivity_margin: float
    max_cluster_mass: float
    r_cluster: float

    def to_json(self):
        return dict(self.__dict__)


def abs_continuity_probe(interp, t, r_cluster=1e-3):
    """Non-collapse diagnostics for ``mu_t``.

    The injectivity margin is the smallest ``|T_t x_a - T_t x_b| / |x_a - x_b|``
    over distinct pairs of source atoms; the cluster mass is the largest
    total weight inside a ball of radius ``r_cluster`` around an atom.
    """
    if not 0.0 < t < 1.0:
        raise ValueError("the probe needs 0 < t < 1")
    k = int(np.argmin([abs(s - t) for s in interp.t_values]))
    if abs(interp.t_values[k] - t) > 1e-12:
        raise ValueError(f"t={t} is not among the interpolation times")
    cloud = interp.clouds[k]
    X0 = interp.clouds[0] if interp.t_values[0] == 0.0 else None
    if X0 is None:
        raise ValueError("interpolation must include t = 0")
    i, j = np.triu_indices(len(cloud), k=1)
    base = np.linalg.norm(X0[i] - X0[j], axis=1)
    keep = base > 0.0
    margin = float(np.min(np.linalg.norm(cloud[i] - cloud[j], axis=1)[keep] / base[keep])) if keep.any() else math.inf
    tree = cKDTree(cloud)
    mass = max(float(np.sum(interp.weights[tree.query_ball_point(p, r_cluster)])) for p in cloud)
    return ContinuityReport(t, margin, mass, r_cluster)


# --- Jacobian identity ----------------------------------------------------------


def covector_field(map_est, k=None):
    """Callable ``z -> phat(z)``: local affine regression of the stored covectors."""
    X = map_est.sources
    keep = map_est.labels != "excluded"
    X, P = X[keep], map_est.covectors[keep]
    n = X.shape[1]
    k = min(len(X), 2 * n + 2 if k is None else k)
    tree = cKDTree(X)

    def field_at(Z):
        Z = np.atleast_2d(Z)
        out = np.zeros((len(Z), n))
        if not np.any(P):
            return out
        r, idx = tree.query(Z, k=k)
        r = r.reshape(len(Z), k)
        idx = idx.reshape(len(Z), k)
        for q in range(len(Z)):
            R = 1.01 * r[q].max() + 1e-300
            w = (1.0 - (r[q] / R) ** 2) ** 2
            A = np.column_stack([np.ones(k), X[idx[q]] - Z[q]]) * np.sqrt(w)[:, None]
            coef, *_ = np.linalg.lstsq(A, P[idx[q]] * np.sqrt(w)[:, None], rcond=None)
            out[q] = coef[0]
        return out

    return field_at


@dataclass
class JacobianReport:
    median_residual: float
    max_residual: float
    min_abs_det: float
    nodes: int
    static_identity_residual: float
    det_values: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)

    def to_json(self):
        return {
            "median_residual": self.median_residual,
            "max_residual": self.max_residual,
            "min_abs_det": self.min_abs_det,
            "nodes": self.nodes,
            "static_identity_residual": self.static_identity_residual,
        }


def jacobian_residual(map_est, frame, f, g, grid_h, box=None, shape=12, opts=DEFAULT_OPTIONS, backend=None):
    """``|det dT(x) - f(x) / g(T x)|`` on a regular grid of sources.

    The map is reconstructed off the atoms as ``T(z) = exp_z(phat(z))`` and
    ``dT = I + D(T - id)`` with central differences of step ``grid_h``, so an
    identity map has ``det = 1`` exactly. Nodes are those of a ``shape``-per-axis
    grid over ``box`` (default: the atoms' bounding box) whose stencil stays
    inside it and where ``f > 0``.
    """
    X = map_est.sources
    n = frame.n
    lo, hi = (X.min(axis=0), X.max(axis=0)) if box is None else (np.asarray(box[0]), np.asarray(box[1]))
    if np.any(hi - lo <= 2.0 * grid_h) or shape < 3:
        raise GridTooCoarse(f"grid_h={grid_h} leaves no interior stencil in the box")
    axes = [np.linspace(lo[i], hi[i], shape) for i in range(n)]
    Z = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    inside = np.all((Z - grid_h >= lo - 1e-12) & (Z + grid_h <= hi + 1e-12), axis=1)
    fz = np.array([f(z) for z in Z])
    Z = Z[inside & (fz > 0)]
    fz = fz[inside & (fz > 0)]
    if len(Z) == 0:
        raise GridTooCoarse("no grid node with a full stencil and positive source density")

    phat = covector_field(map_est)
    E = np.eye(n) * grid_h
    stencil = np.concatenate([Z[:, None, :], Z[:, None, :] + E[None], Z[:, None, :] - E[None]], axis=1)
    pts = stencil.reshape(-1, n)
    Pq = phat(pts)
    moved = np.zeros_like(pts)
    mv = np.any(Pq != 0.0, axis=1)
    if mv.any():
        moved[mv] = kernels.ham_endpoints(frame, pts[mv], Pq[mv], opts.steps, backend=backend)[0] - pts[mv]
    D = moved.reshape(len(Z), 2 * n + 1, n)
    TZ = Z + D[:, 0]
    dT = np.eye(n)[None] + np.transpose((D[:, 1 : n + 1] - D[:, n + 1 :]) / (2.0 * grid_h), (0, 2, 1))
    det = np.linalg.det(dT)
    gz = np.array([g(y) for y in TZ])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(gz > 0, fz / gz, np.inf)
    res = np.abs(det - ratio)

    st = map_est.static
    static_res = float(np.max(np.abs([f(x) - g(x) for x in X[st]]))) if st.any() else 0.0
    return JacobianReport(
        median_residual=float(np.median(res)),
        max_residual=float(np.max(res)),
        min_abs_det=float(np.min(np.abs(det))),
        nodes=len(Z),
        static_identity_residual=static_res,
        det_values=det,
        residuals=res,
    )
