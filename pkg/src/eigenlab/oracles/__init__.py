from .bessel import BesselError, bessel_j, bessel_j_recurrence, bessel_j_series, bessel_zero
from .modes import (
    AnalyticMode,
    ModeError,
    RectangleMode,
    SectorHarmonic,
    TriangleMode,
    rectangle_mode,
    sector_harmonic,
    triangle_mode,
)
from .polynomial import poly_commutator_check

__all__ = [
    "AnalyticMode",
    "BesselError",
    "ModeError",
    "RectangleMode",
    "SectorHarmonic",
    "TriangleMode",
    "bessel_j",
    "bessel_j_recurrence",
    "bessel_j_series",
    "bessel_zero",
    "poly_commutator_check",
    "rectangle_mode",
    "sector_harmonic",
    "triangle_mode",
]
