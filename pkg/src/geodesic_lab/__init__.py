"""Near-identity volume-preserving dynamics on (unit tangent bundle) x interval.

A lab for building the perturbed product system, measuring its Lyapunov
structure, probing accessibility, and assembling the banded global map,
with a CLI front end for reproducible experiment runs.
"""

from .config import LabConfig, default_config, load_config
from .hyperbolic_core import (
    ClosedOrbit,
    FuchsianGroup,
    GroupElement,
    SurfacePoint,
    octagon_group,
)
from .product_dynamics import Chart, ChartPoint, ProductPoint
from .perturbations import MapSystem, build_system

__version__ = "0.1.0"

__all__ = [
    "LabConfig",
    "default_config",
    "load_config",
    "GroupElement",
    "FuchsianGroup",
    "SurfacePoint",
    "ClosedOrbit",
    "octagon_group",
    "ProductPoint",
    "Chart",
    "ChartPoint",
    "MapSystem",
    "build_system",
    "__version__",
]
