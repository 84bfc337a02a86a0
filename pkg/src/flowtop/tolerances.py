"""Numerical thresholds shared by the geometry code and the property tests."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    constraint: float = 1e-8
    round_trip: float = 1e-7
    tangent: float = 1e-9
    # stands in for an infinite injectivity radius (E^d, H^2)
    inf_radius: float = 1e12


TOL = Tolerances()
