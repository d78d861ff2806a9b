"""Sub-Riemannian geodesics, distances, singular paths and optimal transport."""

__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
from .frames import CATALOG_NAMES, ControlFrame, catalog, custom_frame  # noqa: E402
from .geodesics import HorizontalPath, NormalExtremal, exp_map, flow_extremal, hamiltonian  # noqa: E402
from .kantorovich import DiscreteMeasure, TransportPlan, solve_kantorovich  # noqa: E402
from .kernels import BACKEND  # noqa: E402
from .metric import DEFAULT_OPTIONS, DistanceResult, ShootingOptions, distance  # noqa: E402

__all__ = [
    "__version__",
    "BACKEND",
    "CATALOG_NAMES",
    "ControlFrame",
    "DEFAULT_OPTIONS",
    "DiscreteMeasure",
    "DistanceResult",
    "HorizontalPath",
    "NormalExtremal",
    "ShootingOptions",
    "TransportPlan",
    "catalog",
    "custom_frame",
    "distance",
    "exp_map",
    "flow_extremal",
    "hamiltonian",
    "solve_kantorovich",
]
