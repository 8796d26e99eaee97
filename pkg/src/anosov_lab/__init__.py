"""Numerical Patterson-Sullivan theory for Anosov subgroups of SL(n, R) and products of SL(2, R)."""

__version__ = "0.1.0"

from .errors import AnosovLabError  # noqa: E402
from .orbit_engine import GroupPresentation, OrbitBall, enumerate_ball, critical_exponent  # noqa: E402
from .presets import get_preset  # noqa: E402

__all__ = ["AnosovLabError", "GroupPresentation", "OrbitBall", "enumerate_ball", "critical_exponent",
           "get_preset", "__version__"]
