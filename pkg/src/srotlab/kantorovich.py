"""Discrete optimal transport for the cost ``c = d_SR^2``.

The exact solver is a transportation simplex on the bipartite network:
a basis is a spanning tree of ``n + m - 1`` cells, potentials solve
``phi_a + psi_b = C_ab`` on the tree, and an entering cell closes the
unique tree cycle along which flow is shifted. Pricing is Dantzig's rule;
after a run of degenerate pivots it switches to Bland's rule, which cannot
cycle. Tree potentials are already c-transforms of each other because every
atom touches the tree.
"""

from __future__ import annotations

import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import shortest_path
from scipy.special import logsumexp

from . import kernels
from .errors import Infeasible, NoConvergence, NumericalFailure
from .metric import DEFAULT_OPTIONS, distance

log = logging.getLogger(__name__)

POTENTIAL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        if len(w) != len(pts):
            raise ValueError("one weight per point")
        if not np.isfinite(pts).all():
            raise ValueError("points must be finite")
        if (w < 0).any():
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(pts, np.full(len(pts), 1.0 / len(pts)))

    def __len__(self):
        return len(self.weights)

    @property
    def dim(self):
        return self.points.shape[1]


@dataclass(eq=False)
class TransportPlan:
    coupling: sparse.csr_matrix
    source: DiscreteMeasure | None
    target: DiscreteMeasure | None
    cost: float

    @property
    def dense(self):
        return self.coupling.toarray()

    def support(self, threshold=0.0):
        coo = self.coupling.tocoo()
        keep = coo.data > threshold
        return coo.row[keep], coo.col[keep], coo.data[keep]

    def marginal_error(self, a, b):
        G = self.coupling
        return max(
            float(np.max(np.abs(np.asarray(G.sum(axis=1)).ravel() - a))),
            float(np.max(np.abs(np.asarray(G.sum(axis=0)).ravel() - b))),
        )

    def destinations(self, threshold=0.0):
        """Per source row, the target indices carrying mass."""
        rows, cols, _ = self.support(threshold)
        out = [[] for _ in range(self.coupling.shape[0])]
        for r, c in zip(rows, cols):
            out[r].append(int(c))
        return out

    def multi_destination_rows(self, threshold=0.0):
        return [a for a, d in enumerate(self.destinations(threshold)) if len(d) > 1]

    def triplets(self):
        rows, cols, vals = self.support()
        order = np.lexsort((cols, rows))
        return rows[order], cols[order], vals[order]


@dataclass(eq=False)
class DualPotentials:
    phi: np.ndarray
    phic: np.ndarray
    gap: float


# --- cost matrix ------------------------------------------------------------


@dataclass(eq=False)
class DistanceTable:
    """Pairwise distances with minimizing covectors and solver flags."""

    values: np.ndarray
    covectors: np.ndarray
    methods: np.ndarray
    multiplicity: np.ndarray = field(default=None)

    @property
    def cost(self):
        return self.values**2


def _pair_tasks(nx, ny, symmetric):
    if symmetric:
        return [(a, b) for a in range(nx) for b in range(a, ny)]
    return [(a, b) for a in range(nx) for b in range(ny)]


def distance_table(frame, X, Y, opts=DEFAULT_OPTIONS, threads=1, symmetric=None):
    """All ``d_SR(x_a, y_b)``; ``symmetric`` (default: ``X is Y`` or equal arrays) mirrors the upper triangle."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if symmetric is None:
        symmetric = X.shape == Y.shape and np.array_equal(X, Y)
    nx, ny = len(X), len(Y)
    tasks = _pair_tasks(nx, ny, symmetric)

    def solve(ab):
        a, b = ab
        try:
            return ab, distance(frame, X[a], Y[b], opts)
        except NoConvergence as exc:
            exc.index = ab
            raise

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(solve, tasks))
    else:
        results = [solve(t) for t in tasks]

    values = np.zeros((nx, ny))
    covectors = np.zeros((nx, ny, frame.n))
    methods = np.empty((nx, ny), dtype=object)
    mult = np.zeros((nx, ny), dtype=int)
    for (a, b), r in results:
        values[a, b] = r.value
        covectors[a, b] = r.covector
        methods[a, b] = r.method
        mult[a, b] = r.multiplicity
    if symmetric:
        lower = [(a, b) for (a, b) in tasks if a != b]
        if lower:
            # the reversed geodesic starts from the final covector, negated
            P = np.array([covectors[a, b] for a, b in lower])
            X0 = np.array([X[a] for a, _ in lower])
            _, p1 = kernels.ham_endpoints(frame, X0, P, opts.steps)
            for k, (a, b) in enumerate(lower):
                values[b, a] = values[a, b]
                covectors[b, a] = -p1[k]
                methods[b, a] = methods[a, b]
                mult[b, a] = mult[a, b]
    return DistanceTable(values, covectors, methods, mult)


def cost_matrix(frame, X, Y, opts=DEFAULT_OPTIONS, cache=None, threads=1):
    """``C_ab = d_SR(x_a, y_b)^2``, through ``cache`` when one is given."""
    if cache is not None:
        return cache.cost_matrix(frame, X, Y, opts, threads=threads)
    return distance_table(frame, X, Y, opts, threads=threads).cost


# --- exact solver -----------------------------------------------------------


def _northwest_corner(a, b):
    n, m = len(a), len(b)
    s, d = a.astype(float).copy(), b.astype(float).copy()
    cells, flows = [], []
    i = j = 0
    while i < n and j < m:
        q = min(s[i], d[j])
        cells.append((i, j))
        flows.append(q)
        s[i] -= q
        d[j] -= q
        if i == n - 1 and j == m - 1:
            break
        # leave a row first on ties so the basis stays a spanning tree
        if (s[i] <= d[j] and i < n - 1) or j == m - 1:
            i += 1
        else:
            j += 1
    return cells, flows


class _Tree:
    """Basis cells as a spanning tree on row nodes ``0..n-1`` and column nodes ``n..n+m-1``."""

    def __init__(self, n, m, cells, flows):
        self.n, self.m = n, m
        self.flow = dict(zip(cells, flows))
        self.adj = [set() for _ in range(n + m)]
        for i, j in cells:
            self.adj[i].add(n + j)
            self.adj[n + j].add(i)

    def add(self, i, j, q):
        self.flow[(i, j)] = q
        self.adj[i].add(self.n + j)
        self.adj[self.n + j].add(i)

    def remove(self, i, j):
        del self.flow[(i, j)]
        self.adj[i].discard(self.n + j)
        self.adj[self.n + j].discard(i)

    def potentials(self, C):
        n, m = self.n, self.m
        u = np.full(n, np.nan)
        v = np.full(m, np.nan)
        u[0] = 0.0
        queue = deque([0])
        seen = np.zeros(n + m, dtype=bool)
        seen[0] = True
        while queue:
            k = queue.popleft()
            for l in self.adj[k]:
                if seen[l]:
                    continue
                seen[l] = True
                if k < n:
                    v[l - n] = C[k, l - n] - u[k]
                else:
                    u[l] = C[l, k - n] - v[k - n]
                queue.append(l)
        if not seen.all():
            raise NumericalFailure("basis is not a spanning tree")
        return u, v

    def path(self, start, goal):
        parent = {start: None}
        queue = deque([start])
        while queue:
            k = queue.popleft()
            if k == goal:
                break
            for l in self.adj[k]:
                if l not in parent:
                    parent[l] = k
                    queue.append(l)
        nodes = [goal]
        while parent[nodes[-1]] is not None:
            nodes.append(parent[nodes[-1]])
        return nodes[::-1]

    def cell(self, k, l):
        return (k, l - self.n) if k < self.n else (l, k - self.n)


def _transport_simplex(a, b, C, max_pivots=None):
    n, m = C.shape
    cells, flows = _northwest_corner(a, b)
    tree = _Tree(n, m, cells, flows)
    scale = max(1.0, float(np.max(np.abs(C))))
    tol = 1e-13 * scale
    max_pivots = max_pivots or 50 * (n + m) * max(n, m)
    degenerate_run = 0
    for pivot in range(max_pivots):
        u, v = tree.potentials(C)
        R = C - u[:, None] - v[None, :]
        for (i, j) in tree.flow:
            R[i, j] = 0.0
        if degenerate_run > 2 * (n + m):
            neg = np.flatnonzero(R.ravel() < -tol)
            if len(neg) == 0:
                return tree, u, v, pivot
            e = int(neg[0])
        else:
            e = int(np.argmin(R))
            if R.flat[e] >= -tol:
                return tree, u, v, pivot
        ei, ej = divmod(e, m)
        nodes = tree.path(ei, n + ej)
        edges = [tree.cell(nodes[k], nodes[k + 1]) for k in range(len(nodes) - 1)]
        minus = edges[0::2]
        plus = edges[1::2]
        theta = min(tree.flow[c] for c in minus)
        # Bland tie-break on the leaving cell
        leave = min(c for c in minus if tree.flow[c] <= theta)
        degenerate_run = degenerate_run + 1 if theta == 0.0 else 0
        for c in minus:
            tree.flow[c] -= theta
        for c in plus:
            tree.flow[c] += theta
        tree.remove(*leave)
        tree.add(ei, ej, theta)
    raise NumericalFailure(f"transport simplex did not terminate in {max_pivots} pivots")


def _normalised_duals(u, v, C):
    shift = float(np.min(u))
    phi = u - shift
    psi = v + shift
    return phi, psi


def solve_kantorovich(mu, nu, C, method="simplex", eps=1e-3, max_iter=10000):
    """Optimal plan and Kantorovich potentials (``min phi = 0``) for cost ``C``.

    ``mu`` and ``nu`` may be :class:`DiscreteMeasure` or weight vectors.
    ``method="sinkhorn"`` runs log-domain entropic scaling down to ``eps``
    followed by rounding onto the exact marginals; it is approximate.
    """
    a = mu.weights if isinstance(mu, DiscreteMeasure) else np.asarray(mu, dtype=float)
    b = nu.weights if isinstance(nu, DiscreteMeasure) else np.asarray(nu, dtype=float)
    C = np.asarray(C, dtype=float)
    if C.shape != (len(a), len(b)):
        raise ValueError(f"cost shape {C.shape} does not match marginals ({len(a)}, {len(b)})")
    if not np.isfinite(C).all():
        raise ValueError("cost matrix must be finite")
    if abs(a.sum() - b.sum()) > 1e-9:
        raise Infeasible(f"unbalanced marginals: {a.sum()} vs {b.sum()}")
    src = mu if isinstance(mu, DiscreteMeasure) else None
    dst = nu if isinstance(nu, DiscreteMeasure) else None

    if method == "simplex":
        tree, u, v, pivots = _transport_simplex(a, b, C)
        cells = list(tree.flow.items())
        rows = np.array([c[0][0] for c in cells])
        cols = np.array([c[0][1] for c in cells])
        vals = np.array([c[1] for c in cells])
        keep = vals > 0.0
        G = sparse.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=C.shape)
        phi, psi = _normalised_duals(u, v, C)
        log.debug("transport simplex: %d pivots", pivots)
    elif method == "sinkhorn":
        G, phi, psi = _sinkhorn(a, b, C, eps, max_iter)
        G = sparse.csr_matrix(G)
    else:
        raise ValueError(f"unknown method {method!r}")

    cost = float(G.multiply(C).sum())
    gap = cost - float(a @ phi) - float(b @ psi)
    if method == "simplex" and gap < -1e-9 * (1.0 + abs(cost)):
        raise NumericalFailure(f"negative duality gap {gap}")
    return TransportPlan(G, src, dst, cost), DualPotentials(phi, psi, gap)


def _sinkhorn(a, b, C, eps, max_iter):
    """Entropic plan with eps-scaling, rounded to exact marginals; duals made c-concave."""
    la, lb = np.log(a), np.log(b)
    f = np.zeros(len(a))
    g = np.zeros(len(b))
    e = max(float(np.max(C)), eps)
    while True:
        for _ in range(max_iter):
            f_new = -e * logsumexp((g[None, :] - C) / e + lb[None, :], axis=1)
            g = -e * logsumexp((f_new[:, None] - C) / e + la[:, None], axis=0)
            done = np.max(np.abs(f_new - f)) < 1e-12 * (1.0 + np.max(np.abs(f)))
            f = f_new
            if done:
                break
        if e <= eps:
            break
        e = max(e / 4.0, eps)
    P = np.exp((f[:, None] + g[None, :] - C) / e + la[:, None] + lb[None, :])
    # rounding onto the transport polytope
    x = np.minimum(a / np.maximum(P.sum(axis=1), 1e-300), 1.0)
    P = x[:, None] * P
    y = np.minimum(b / np.maximum(P.sum(axis=0), 1e-300), 1.0)
    P = P * y[None, :]
    ra = a - P.sum(axis=1)
    rb = b - P.sum(axis=0)
    if ra.sum() > 0:
        P += np.outer(ra, rb) / ra.sum()
    psi = c_transform(f, C, "xy")
    phi = c_transform(psi, C, "yx")
    shift = float(np.min(phi))
    return P, phi - shift, psi + shift


# --- duality checks -----------------------------------------------------------


def c_transform(values, C, direction="xy"):
    """``xy``: ``phi^c(y_b) = min_a C_ab - phi_a``; ``yx``: ``psi^c(x_a) = min_b C_ab - psi_b``."""
    values = np.asarray(values, dtype=float)
    C = np.asarray(C, dtype=float)
    if direction == "xy":
        return np.min(C - values[:, None], axis=0)
    if direction == "yx":
        return np.min(C - values[None, :], axis=1)
    raise ValueError(f"direction must be 'xy' or 'yx', not {direction!r}")


@dataclass
class SuperdifferentialReport:
    max_violation: float
    violating_pairs: list
    feasibility_excess: float
    ok: bool

    def to_json(self):
        return {
            "max_violation": self.max_violation,
            "violating_pairs": [list(map(int, p)) for p in self.violating_pairs],
            "feasibility_excess": self.feasibility_excess,
            "ok": self.ok,
        }


def superdifferential_check(plan, duals, C, tol=POTENTIAL_TOL):
    """Check that the plan's support lies in the c-superdifferential of ``phi``.

    On support pairs ``C_ab - phi_a - phi^c_b`` must be ``<= tol``; the
    feasibility excess ``max(phi_a + phi^c_b - C_ab)`` is reported alongside.
    """
    C = np.asarray(C, dtype=float)
    rows, cols, _ = plan.support()
    slack = C[rows, cols] - duals.phi[rows] - duals.phic[cols]
    bad = slack > tol
    excess = float(np.max(duals.phi[:, None] + duals.phic[None, :] - C))
    worst = float(np.max(slack)) if len(slack) else 0.0
    pairs = list(zip(rows[bad].tolist(), cols[bad].tolist()))
    return SuperdifferentialReport(worst, pairs, excess, not pairs and excess <= tol)


def centred_duals(plan, C):
    """Potentials at the centre of the optimal dual face of ``plan``.

    The duals compatible with a fixed optimal support form a polytope
    ``{phi_a + psi_b <= C_ab, equality on the support}``. Writing
    ``pi = (phi, -psi)`` this is a system of difference constraints whose
    extreme solutions are shortest-path potentials; averaging the largest and
    smallest solution over every root gives a feasible interior choice that
    does not depend on which spanning tree the simplex stopped at.
    """
    C = np.asarray(C, dtype=float)
    n, m = C.shape
    W = np.full((n + m, n + m), np.inf)
    # column b -> row a: phi_a <= -psi_b + C_ab
    W[n:, :n] = C.T
    rows, cols, _ = plan.support()
    # row a -> column b on the support: -psi_b <= phi_a - C_ab
    W[rows, n + cols] = -C[rows, cols]
    np.fill_diagonal(W, 0.0)
    D = shortest_path(W, method="FW", directed=True)
    if not np.isfinite(D).all():
        raise NumericalFailure("support graph is not connected; dual face is unbounded")
    if (np.diag(D) < -1e-12).any():
        raise NumericalFailure("negative cycle: plan is not optimal")
    pi = 0.5 * (D.mean(axis=0) - D.mean(axis=1))
    phi = pi[:n]
    # tighten to exact c-transforms so the support equalities hold to rounding
    psi = c_transform(phi, C, "xy")
    phi = c_transform(psi, C, "yx")
    shift = float(np.min(phi))
    phi, psi = phi - shift, psi + shift
    a = np.asarray(plan.coupling.sum(axis=1)).ravel()
    b = np.asarray(plan.coupling.sum(axis=0)).ravel()
    return DualPotentials(phi, psi, plan.cost - float(a @ phi) - float(b @ psi))


def wasserstein(mu, nu, C):
    plan, _ = solve_kantorovich(mu, nu, C)
    return float(np.sqrt(max(plan.cost, 0.0)))
