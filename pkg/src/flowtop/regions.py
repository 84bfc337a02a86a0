"""Open metric balls and finite unions of them (the sets K and W)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import ConfigInvalid
from .manifolds import Manifold


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def contains(self, manifold: Manifold, points) -> np.ndarray:
        return manifold.dist(np.asarray(points, dtype=float), np.asarray(self.center)) < self.radius


@dataclass(frozen=True)
class Region:
    """Union of open geodesic balls."""

    balls: tuple[Ball, ...]

    @classmethod
    def ball(cls, center, radius: float) -> "Region":
        return cls((Ball(tuple(float(c) for c in np.ravel(center)), float(radius)),))

    def contains(self, manifold: Manifold, points) -> np.ndarray:
        inside = self.balls[0].contains(manifold, points)
        for b in self.balls[1:]:
            inside = inside | b.contains(manifold, points)
        return inside

    def to_config(self) -> list[dict[str, Any]]:
        return [{"center": list(b.center), "radius_length": b.radius} for b in self.balls]

    @classmethod
    def from_config(cls, cfg, manifold: Manifold, field: str = "region") -> "Region":
        if isinstance(cfg, dict):
            cfg = [cfg]
        if not cfg:
            raise ConfigInvalid(f"{field}: at least one ball is required")
        balls = []
        for i, item in enumerate(cfg):
            try:
                center = tuple(float(c) for c in item["center"])
                radius = float(item["radius_length"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigInvalid(f"{field}[{i}]: {exc!r}") from exc
            if len(center) != manifold.ambient_dim:
                raise ConfigInvalid(f"{field}[{i}].center: expected {manifold.ambient_dim} coordinates")
            if radius <= 0:
                raise ConfigInvalid(f"{field}[{i}].radius_length: must be positive")
            balls.append(Ball(center, radius))
        return cls(tuple(balls))
