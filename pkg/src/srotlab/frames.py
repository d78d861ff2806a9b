"""Control frames for the distribution catalog and their bracket algebra.

A frame is a tuple ``(f_1, ..., f_m)`` of vector fields on a single chart
``R^n``. The sub-Riemannian metric on the distribution is the one that makes
the frame orthonormal; off the distribution the chart is given the Euclidean
metric (only chart norms and Lebesgue volume ever use it).

Field indices in the scalar API (:meth:`ControlFrame.eval`,
:func:`lie_bracket`, ...) are 1-based to match the usual ``f_1..f_m``
notation. The array API (:meth:`ControlFrame.fields`) is 0-based.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import IndexOutOfRange, UnknownFrame

H_JAC = 1e-5
RANK_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ControlFrame:
    """Chart-level frame ``f_1..f_m`` on ``R^n``.

    ``fields_fn`` maps points of shape ``(..., n)`` to ``(..., m, n)``.
    ``jacobians_fn`` (optional) maps them to ``(..., m, n, n)`` with entry
    ``[i, k, l] = d f_i^k / d x_l``; when absent, central differences with
    step ``h_jac`` are used. ``kernel_code`` selects the compiled kernel for
    catalog frames; user frames keep ``-1`` and run on the numpy backend.
    """

    name: str
    n: int
    m: int
    fields_fn: Callable[[np.ndarray], np.ndarray]
    jacobians_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    kernel_code: int = -1
    h_jac: float = H_JAC
    lattice_axis: tuple = field(default=(-1.0, -0.5, 0.0, 0.5, 1.0))

    def __post_init__(self):
        if self.n < 2 or not (1 <= self.m < self.n):
            raise ValueError(f"frame {self.name!r} needs 1 <= m < n, got m={self.m}, n={self.n}")

    def fields(self, x):
        x = np.asarray(x, dtype=float)
        return self.fields_fn(x)

    def jacobians(self, x):
        x = np.asarray(x, dtype=float)
        if self.jacobians_fn is not None:
            return self.jacobians_fn(x)
        return self.fd_jacobians(x)

    def fd_jacobians(self, x):
        x = np.asarray(x, dtype=float)
        h = self.h_jac
        cols = []
        for l in range(self.n):
            e = np.zeros(self.n)
            e[l] = h
            cols.append((self.fields_fn(x + e) - self.fields_fn(x - e)) / (2 * h))
        return np.stack(cols, axis=-1)

    def _check_index(self, i):
        if not (1 <= i <= self.m):
            raise IndexOutOfRange(f"field index {i} outside 1..{self.m} for frame {self.name!r}")

    def eval(self, i, x):
        """Value of ``f_i`` at ``x`` (1-based ``i``)."""
        self._check_index(i)
        return self.fields(x)[..., i - 1, :]

    def jacobian(self, i, x):
        self._check_index(i)
        return self.jacobians(x)[..., i - 1, :, :]

    def lattice(self):
        """Test lattice: the Cartesian power of ``lattice_axis``."""
        ax = np.asarray(self.lattice_axis, dtype=float)
        return np.array(list(itertools.product(ax, repeat=self.n)))

    def describe(self):
        return {
            "name": self.name,
            "n": self.n,
            "m": self.m,
            "lattice_axis": list(self.lattice_axis),
            "lattice_size": len(self.lattice_axis) ** self.n,
            "lattice": self.lattice().tolist(),
            "distribution_metric": "frame-orthonormal",
            "ambient_metric": "euclidean-chart",
        }


# --- catalog -----------------------------------------------------------------
# Every catalog field is e_i plus polynomial terms in the last coordinates.


def _heis_fields(x):
    out = np.zeros(x.shape[:-1] + (2, 3))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    out[..., 1, 2] = x[..., 0]
    return out


def _heis_jac(x):
    out = np.zeros(x.shape[:-1] + (2, 3, 3))
    out[..., 1, 2, 0] = 1.0
    return out


def _martinet_fields(x):
    out = np.zeros(x.shape[:-1] + (2, 3))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    out[..., 1, 2] = x[..., 0] ** 2
    return out


def _martinet_jac(x):
    out = np.zeros(x.shape[:-1] + (2, 3, 3))
    out[..., 1, 2, 0] = 2.0 * x[..., 0]
    return out


def _two_gen_fields(x):
    out = np.zeros(x.shape[:-1] + (3, 4))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    out[..., 2, 2] = 1.0
    out[..., 2, 3] = x[..., 0]
    return out


def _two_gen_jac(x):
    out = np.zeros(x.shape[:-1] + (3, 4, 4))
    out[..., 2, 3, 0] = 1.0
    return out


def _rank2_dim4_fields(x):
    out = np.zeros(x.shape[:-1] + (2, 4))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    out[..., 1, 2] = x[..., 0]
    out[..., 1, 3] = x[..., 2]
    return out


def _rank2_dim4_jac(x):
    out = np.zeros(x.shape[:-1] + (2, 4, 4))
    out[..., 1, 2, 0] = 1.0
    out[..., 1, 3, 2] = 1.0
    return out


# kernel codes must match the switch in _kernels.pyx
_CATALOG = {
    "heisenberg": lambda: ControlFrame("heisenberg", 3, 2, _heis_fields, _heis_jac, kernel_code=0),
    "martinet": lambda: ControlFrame("martinet", 3, 2, _martinet_fields, _martinet_jac, kernel_code=1),
    "two_generating_r4": lambda: ControlFrame(
        "two_generating_r4", 4, 3, _two_gen_fields, _two_gen_jac, kernel_code=2
    ),
    "rank2_dim4": lambda: ControlFrame("rank2_dim4", 4, 2, _rank2_dim4_fields, _rank2_dim4_jac, kernel_code=3),
}

CATALOG_NAMES = tuple(_CATALOG)


def catalog(name):
    """Return the catalog frame registered under ``name``."""
    try:
        return _CATALOG[name]()
    except KeyError:
        raise UnknownFrame(f"unknown frame {name!r}; known: {', '.join(CATALOG_NAMES)}") from None


def custom_frame(name, n, m, fields_fn, jacobians_fn=None, **kw):
    """Extension point for frames outside the catalog.

    ``fields_fn`` must accept batched points ``(..., n)``. Such frames always
    run on the numpy backend.
    """
    return ControlFrame(name, n, m, fields_fn, jacobians_fn, kernel_code=-1, **kw)


# --- bracket algebra ---------------------------------------------------------


def _bracket(fx, jx, gx, jgx):
    # [f, g] = Dg.f - Df.g
    return jgx @ fx - jx @ gx


def lie_bracket(frame, i, j, x):
    """``[f_i, f_j](x) = Df_j(x) f_i(x) - Df_i(x) f_j(x)`` (1-based indices)."""
    frame._check_index(i)
    frame._check_index(j)
    x = np.asarray(x, dtype=float)
    F = frame.fields(x)
    J = frame.jacobians(x)
    return _bracket(F[i - 1], J[i - 1], F[j - 1], J[j - 1])


def _word_field(frame, word):
    """Callable evaluating the iterated bracket ``[f_w0, [f_w1, [..., f_wk]]]``.

    Jacobians of nested brackets come from central differences of the
    inner bracket, which is exact up to rounding for the polynomial catalog.
    """
    if len(word) == 1:
        idx = word[0]
        return lambda x: frame.fields(x)[idx]

    inner = _word_field(frame, word[1:])
    idx = word[0]
    h = 1e-4

    def value(x):
        fx = frame.fields(x)[idx]
        jf = frame.jacobians(x)[idx]
        gx = inner(x)
        jg = np.empty((frame.n, frame.n))
        for l in range(frame.n):
            e = np.zeros(frame.n)
            e[l] = h
            jg[:, l] = (inner(x + e) - inner(x - e)) / (2 * h)
        return _bracket(fx, jf, gx, jg)

    return value


def bracket_words(m, depth):
    """All right-nested bracket words of length <= depth (0-based letters)."""
    words = []
    for length in range(1, depth + 1):
        for w in itertools.product(range(m), repeat=length):
            # [f_i, f_i] and [f_i, [f_j, f_j]]-type words vanish identically
            if length >= 2 and w[-1] == w[-2]:
                continue
            if length == 2 and w[0] > w[1]:
                continue  # antisymmetry
            words.append(w)
    return words


def bracket_matrix(frame, x, depth):
    x = np.asarray(x, dtype=float)
    cols = [_word_field(frame, w)(x) for w in bracket_words(frame.m, depth)]
    return np.column_stack(cols)


def numerical_rank(A, tol=RANK_TOL):
    """Number of singular values above ``tol`` times the largest one."""
    s = np.linalg.svd(np.atleast_2d(A), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def bracket_span_rank(frame, x, depth=2, tol=RANK_TOL):
    """Rank of the span of all iterated brackets of length <= ``depth`` at ``x``."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    return numerical_rank(bracket_matrix(frame, x, depth), tol)


def martinet_set_membership(frame, x, tol=RANK_TOL):
    """True iff ``Delta(x) + [Delta, Delta](x)`` fails to span ``R^n``."""
    return bracket_span_rank(frame, x, depth=2, tol=tol) < frame.n


def hormander_depth(frame, x, max_depth=4, tol=RANK_TOL):
    """Smallest bracket depth reaching full rank at ``x`` (None if > max_depth)."""
    for depth in range(1, max_depth + 1):
        if bracket_span_rank(frame, x, depth, tol) == frame.n:
            return depth
    return None
