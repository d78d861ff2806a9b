"""Independent reference computations used only by the tests.

None of these call into the shooting solver or the OT solver.
"""

import itertools
import math

import numpy as np
from scipy.optimize import brentq


def heisenberg_relative(p, q):
    """Left-translated displacement ``p^-1 q`` for the group law
    ``(a,b,c)(a',b',c') = (a+a', b+b', c+c'+a b')`` whose left-invariant
    fields are ``d1`` and ``d2 + x1 d3``."""
    a = q[0] - p[0]
    b = q[1] - p[1]
    c = q[2] - p[2] - p[0] * (q[1] - p[1])
    return a, b, c


def heisenberg_distance(p, q):
    """Closed-form Heisenberg distance via the isoperimetric (Dido) problem.

    A minimizer projects to a circular arc of turning angle ``theta`` in
    ``[0, 2 pi)`` whose chord is the planar displacement ``r`` and whose
    segment area is the symmetric area ``A = c - ab/2``. Then
    ``|A| / r^2 = (theta - sin theta) / (8 sin^2(theta/2))`` and
    ``d = r theta / (2 sin(theta/2))``; for ``r = 0``, ``d^2 = 4 pi |A|``.
    """
    a, b, c = heisenberg_relative(np.asarray(p, float), np.asarray(q, float))
    A = abs(c - 0.5 * a * b)
    r = math.hypot(a, b)
    if r == 0.0:
        return math.sqrt(4.0 * math.pi * A)
    if A == 0.0:
        return r
    target = A / (r * r)

    def g(th):
        return (th - math.sin(th)) / (8.0 * math.sin(th / 2.0) ** 2) - target

    hi = 2.0 * math.pi - 1e-15
    lo = 1e-12
    # g is increasing on (0, 2 pi) and blows up at 2 pi
    while g(hi) < 0:
        hi = 0.5 * (hi + 2.0 * math.pi)
        if hi >= 2.0 * math.pi:
            return math.sqrt(4.0 * math.pi * A)
    th = brentq(g, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    return r * th / (2.0 * math.sin(th / 2.0))


def brute_force_assignment(C):
    """Minimum of ``sum_a C[a, s(a)]`` over all permutations (equal weights)."""
    n = C.shape[0]
    best = math.inf
    rows = np.arange(n)
    for perm in itertools.permutations(range(n)):
        v = C[rows, perm].sum()
        if v < best:
            best = v
    return best / n


def fd_bracket(frame, i, j, x, h=1e-5):
    """``[f_i, f_j]`` from central differences of the fields alone."""
    x = np.asarray(x, float)
    n = frame.n

    def D(k):
        cols = []
        for l in range(n):
            e = np.zeros(n)
            e[l] = h
            cols.append((frame.eval(k, x + e) - frame.eval(k, x - e)) / (2 * h))
        return np.column_stack(cols)

    return D(j) @ frame.eval(i, x) - D(i) @ frame.eval(j, x)
