"""Backend dispatch for the integration kernels.

The compiled extension is used for catalog frames when it imports; the
numpy fallback handles custom frames and builds without a C compiler.
Set ``SROTLAB_BACKEND=python`` to force the fallback everywhere.
"""

import os

import numpy as np

from . import _fallback

try:  # pragma: no cover - depends on the build
    if os.environ.get("SROTLAB_BACKEND", "").lower() == "python":
        raise ImportError("compiled backend disabled by SROTLAB_BACKEND")
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover
    _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def _use_compiled(frame, backend):
    if backend == "python":
        return False
    ok = _compiled is not None and frame.kernel_code >= 0
    if backend == "compiled" and not ok:
        raise RuntimeError(f"compiled backend unavailable for frame {frame.name!r}")
    return ok


def ham_endpoints(frame, X0, P0, steps, t_end=1.0, backend=None):
    """Batched endpoints ``(x(t_end), p(t_end))``; blown-up rows are NaN."""
    X0 = np.ascontiguousarray(np.atleast_2d(X0), dtype=float)
    P0 = np.ascontiguousarray(np.atleast_2d(P0), dtype=float)
    if _use_compiled(frame, backend):
        return _compiled.ham_endpoints(frame.kernel_code, X0, P0, int(steps), float(t_end))
    return _fallback.ham_endpoints(frame, X0, P0, int(steps), float(t_end))


def ham_trajectory(frame, x0, p0, steps, t_end=1.0, backend=None):
    x0 = np.ascontiguousarray(x0, dtype=float)
    p0 = np.ascontiguousarray(p0, dtype=float)
    if _use_compiled(frame, backend):
        return _compiled.ham_trajectory(frame.kernel_code, x0, p0, int(steps), float(t_end))
    return _fallback.ham_trajectory(frame, x0, p0, int(steps), float(t_end))


def controlled_flow(frame, x0, U, p0=None, want_phi=False, backend=None):
    x0 = np.ascontiguousarray(x0, dtype=float)
    U = np.ascontiguousarray(U, dtype=float)
    if _use_compiled(frame, backend):
        return _compiled.controlled_flow(frame.kernel_code, x0, U, p0, bool(want_phi))
    return _fallback.controlled_flow(frame, x0, U, p0, want_phi)
