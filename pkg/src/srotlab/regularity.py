"""Empirical semiconcavity and Lipschitz probes for ``u = d_SR^2``.

Both probes work on the product chart ``R^n x R^n`` and draw samples from a
seeded stream, so the first ``k`` samples of a larger run are exactly the
samples of a run of size ``k``. Estimates are therefore monotone in the
sample count by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metric import DEFAULT_OPTIONS, distance

R_MIN = 0.3


def _u(frame, P, opts):
    n = frame.n
    return distance(frame, P[:n], P[n:], opts).value ** 2


@dataclass
class ProbeReport:
    estimate: float
    samples: int
    quotients: np.ndarray = field(repr=False)
    params: dict = field(default_factory=dict)

    def prefix_estimate(self, k):
        """Estimate from the first ``k`` samples."""
        q = self.quotients[:k]
        q = q[np.isfinite(q)]
        return float(np.max(q)) if len(q) else 0.0

    def to_json(self):
        return {"estimate": self.estimate, "samples": self.samples, **self.params}


def semiconcavity_probe(
    frame,
    base_pair,
    samples=200,
    mu_grid=(0.25, 0.5, 0.75),
    radius=0.3,
    d_range=(0.5, 2.0),
    r_min=R_MIN,
    seed=0,
    opts=DEFAULT_OPTIONS,
):
    """Largest ``[mu u(Y) + (1-mu) u(X) - u(mu Y + (1-mu) X)] / [mu (1-mu) |X-Y|^2]``.

    ``X`` and ``Y`` are product-space points within ``radius`` (per factor,
    per axis) of ``base_pair``. A sample counts only if every evaluated pair
    has ``d`` inside ``d_range`` and above ``r_min``; rejected samples
    record NaN so the prefix structure is kept.
    """
    x0, y0 = (np.asarray(p, dtype=float) for p in base_pair)
    base = np.concatenate([x0, y0])
    lo, hi = max(d_range[0], r_min), d_range[1]
    mu_grid = tuple(float(m) for m in mu_grid)
    rng = np.random.default_rng(seed)
    draws = rng.uniform(-radius, radius, size=(samples, 2, base.size))
    q = np.full(samples, np.nan)
    for s in range(samples):
        X = base + draws[s, 0]
        Y = base + draws[s, 1]
        ux, uy = _u(frame, X, opts), _u(frame, Y, opts)
        if not (lo * lo <= ux <= hi * hi and lo * lo <= uy <= hi * hi):
            continue
        sq = float(np.sum((X - Y) ** 2))
        best = -np.inf
        ok = True
        for m in mu_grid:
            if m in (0.0, 1.0):
                best = max(best, 0.0)
                continue
            um = _u(frame, m * Y + (1.0 - m) * X, opts)
            if not lo * lo <= um <= hi * hi:
                ok = False
                break
            best = max(best, (m * uy + (1.0 - m) * ux - um) / (m * (1.0 - m) * sq))
        if ok:
            q[s] = best
    fin = q[np.isfinite(q)]
    return ProbeReport(
        estimate=float(np.max(fin)) if len(fin) else 0.0,
        samples=samples,
        quotients=q,
        params={
            "kind": "semiconcavity",
            "accepted": int(len(fin)),
            "radius": radius,
            "d_range": list(d_range),
            "r_min": r_min,
            "mu_grid": list(mu_grid),
            "seed": seed,
        },
    )


def lipschitz_probe(frame, region, samples=200, scale=1e-2, near_diagonal=0.25, seed=0, opts=DEFAULT_OPTIONS):
    """Largest ``|u(a) - u(b)| / |a - b|`` for ``b`` a chart perturbation of ``a``.

    ``a = (z, w)`` is uniform in ``region^2``; a share ``near_diagonal`` of the
    samples puts ``w`` within ``scale`` of ``z`` so that pairs cross the diagonal.
    """
    lo, hi = (np.asarray(v, dtype=float) for v in region)
    n = frame.n
    rng = np.random.default_rng(seed)
    Z = rng.uniform(lo, hi, size=(samples, n))
    W = rng.uniform(lo, hi, size=(samples, n))
    close = rng.uniform(size=samples) < near_diagonal
    W[close] = Z[close] + scale * rng.uniform(-1.0, 1.0, size=(int(close.sum()), n))
    step = rng.standard_normal((samples, 2 * n))
    step *= scale / np.linalg.norm(step, axis=1, keepdims=True)
    q = np.empty(samples)
    for s in range(samples):
        a = np.concatenate([Z[s], W[s]])
        b = a + step[s]
        q[s] = abs(_u(frame, a, opts) - _u(frame, b, opts)) / scale
    return ProbeReport(
        estimate=float(np.max(q)),
        samples=samples,
        quotients=q,
        params={"kind": "lipschitz", "scale": scale, "region": [lo.tolist(), hi.tolist()], "seed": seed},
    )
