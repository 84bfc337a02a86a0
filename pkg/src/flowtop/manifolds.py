"""Model Riemannian manifolds in embedded (ambient-coordinate) representation.

Every method is vectorized: points and tangent vectors are float arrays whose
last axis has length ``ambient_dim`` and whose leading axes broadcast.  Points
are plain ``numpy`` arrays; a tangent vector is an array paired with the base
point it is attached to.

Four models are provided:

* :class:`Euclidean` -- ``E^d`` with the identity embedding.
* :class:`Sphere` -- ``S^d`` of radius ``r`` inside ``R^{d+1}``.
* :class:`FlatTorus` -- ``R^d`` modulo a lattice, stored in Cartesian
  coordinates reduced to the fundamental parallelepiped.
* :class:`Hyperbolic2` -- the upper sheet of the hyperboloid
  ``<x, x> = -1`` in Minkowski space ``R^{2,1}``.
"""

from __future__ import annotations

import itertools
from typing import Any

import numpy as np

from .errors import BeyondInjectivityRadius, ConfigInvalid, ProjectionIllConditioned
from .tolerances import TOL

__all__ = [
    "Manifold",
    "Euclidean",
    "Sphere",
    "FlatTorus",
    "Hyperbolic2",
    "manifold_from_config",
]


def _norm(v):
    return np.sqrt(np.sum(v * v, axis=-1))


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def _shape(size):
    return () if size == () else tuple(np.atleast_1d(size))


class Manifold:
    """Common interface; subclasses supply the closed forms."""

    kind: str = "abstract"
    dim: int
    ambient_dim: int

    # -- metric -----------------------------------------------------------
    def inner(self, x, u, v):
        return _dot(u, v)

    def norm(self, x, v):
        return np.sqrt(np.maximum(self.inner(x, v, v), 0.0))

    def exp(self, x, v):
        raise NotImplementedError

    def _log(self, x, y):
        """Return ``(v, d)`` without any cut-locus check."""
        raise NotImplementedError

    def log(self, x, y, check: bool = True):
        """Inverse of :meth:`exp` on the injectivity domain.

        Raises :class:`BeyondInjectivityRadius` (carrying the flat index of
        the first offending pair) when ``d(x, y) >= R_inj(x)``.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        v, d = self._log(x, y)
        if check:
            bad = np.asarray(d >= self.injectivity_radius(x) * (1.0 - 1e-12))
            if bad.any():
                idx = int(np.flatnonzero(bad.ravel())[0])
                raise BeyondInjectivityRadius(
                    f"d(x, y) = {np.ravel(d)[idx]:.6g} is not below the injectivity "
                    f"radius {np.ravel(np.broadcast_to(self.injectivity_radius(x), np.shape(d)))[idx]:.6g}",
                    index=idx,
                )
        return v

    def dist(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self._log(x, y)[1]

    def geodesic_point(self, x, y, s):
        """Point at parameter ``s`` on the minimizing geodesic from x to y.

        Endpoints are returned bitwise at ``s = 0`` and ``s = 1``.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        v = self.log(x, y)
        s = np.asarray(s, dtype=float)
        out = self.exp(x, s[..., None] * v)
        out = np.where((s == 0.0)[..., None], x, out)
        out = np.where((s == 1.0)[..., None], y, out)
        return out

    # -- injectivity ------------------------------------------------------
    def injectivity_radius(self, x=None):
        raise NotImplementedError

    def injectivity_radius_set(self, points) -> float:
        points = np.asarray(points, dtype=float).reshape(-1, self.ambient_dim)
        if len(points) == 0:
            raise ValueError("point set must be non-empty")
        return float(np.min(np.broadcast_to(self.injectivity_radius(points), len(points))))

    # -- projections ------------------------------------------------------
    def project(self, y):
        return self.project_jvp(y, None)[0]

    def project_jvp(self, y, w):
        """Nearest-point projection and its derivative applied to ``w``."""
        raise NotImplementedError

    def project_tangent(self, x, v):
        return np.asarray(v, dtype=float)

    # -- residuals --------------------------------------------------------
    def constraint_residual(self, x):
        return np.zeros(np.shape(x)[:-1])

    def tangent_residual(self, x, v):
        return np.zeros(np.shape(x)[:-1])

    # -- sets -------------------------------------------------------------
    def pairwise_dist(self, A):
        A = np.asarray(A, dtype=float)
        return self.dist(A[..., :, None, :], A[..., None, :, :])

    def diameter(self, A):
        A = np.asarray(A, dtype=float)
        if A.shape[-2] == 0:
            raise ValueError("point set must be non-empty")
        return np.max(self.pairwise_dist(A), axis=(-2, -1))

    # -- sampling (tests and fixtures) ------------------------------------
    def random_point(self, rng, size=()):
        raise NotImplementedError

    def random_tangent(self, rng, x, scale=1.0):
        x = np.asarray(x, dtype=float)
        v = self.project_tangent(x, rng.standard_normal(x.shape))
        return scale * v

    def to_config(self) -> dict[str, Any]:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.to_config()})"


class Euclidean(Manifold):
    kind = "euclidean"

    def __init__(self, dim: int, inf_radius: float = TOL.inf_radius):
        if dim < 1:
            raise ValueError("dimension must be positive")
        self.dim = self.ambient_dim = int(dim)
        self.inf_radius = float(inf_radius)

    def exp(self, x, v):
        return np.asarray(x, dtype=float) + np.asarray(v, dtype=float)

    def _log(self, x, y):
        v = y - x
        return v, _norm(v)

    def injectivity_radius(self, x=None):
        if x is None:
            return self.inf_radius
        return np.full(np.shape(x)[:-1], self.inf_radius)

    def project_jvp(self, y, w):
        return np.asarray(y, dtype=float), w

    def random_point(self, rng, size=()):
        return rng.standard_normal(_shape(size) + (self.dim,))

    def to_config(self):
        cfg = {"kind": self.kind, "dim": self.dim}
        if self.inf_radius != TOL.inf_radius:
            cfg["inf_radius_length"] = self.inf_radius
        return cfg


class Sphere(Manifold):
    kind = "sphere"

    def __init__(self, dim: int = 2, radius: float = 1.0):
        if radius <= 0:
            raise ValueError("sphere radius must be positive")
        self.dim = int(dim)
        self.ambient_dim = self.dim + 1
        self.radius = float(radius)

    def exp(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        n = _norm(v)[..., None]
        r = self.radius
        # r sin(n/r)/n written through sinc so that n = 0 needs no branch
        return np.cos(n / r) * x + np.sinc(n / (np.pi * r)) * v

    def _log(self, x, y):
        r = self.radius
        c = _dot(x, y) / r**2
        u = y - c[..., None] * x
        s = _norm(u) / r
        theta = np.arctan2(s, c)
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(s > 0, r * theta / np.where(s > 0, s * r, 1.0), 0.0)
        return scale[..., None] * u, r * theta

    def injectivity_radius(self, x=None):
        if x is None:
            return np.pi * self.radius
        return np.full(np.shape(x)[:-1], np.pi * self.radius)

    def project_jvp(self, y, w):
        y = np.asarray(y, dtype=float)
        n = _norm(y)
        if np.any(n < 1e-6 * self.radius):
            raise ProjectionIllConditioned("point too close to the sphere centre")
        yh = y / n[..., None]
        p = self.radius * yh
        if w is None:
            return p, None
        w = np.asarray(w, dtype=float)
        dw = (self.radius / n)[..., None] * (w - _dot(yh, w)[..., None] * yh)
        return p, dw

    def project_tangent(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return v - (_dot(v, x) / self.radius**2)[..., None] * x

    def constraint_residual(self, x):
        return np.abs(_norm(np.asarray(x, dtype=float)) - self.radius) / self.radius

    def tangent_residual(self, x, v):
        return np.abs(_dot(x, v)) / self.radius

    def random_point(self, rng, size=()):
        shape = _shape(size)
        g = rng.standard_normal(shape + (self.ambient_dim,))
        return self.radius * g / _norm(g)[..., None]

    def to_config(self):
        return {"kind": self.kind, "dim": self.dim, "radius_length": self.radius}


_TORUS_SHIFTS: dict[int, np.ndarray] = {}


def _unit_shifts(d: int) -> np.ndarray:
    if d not in _TORUS_SHIFTS:
        _TORUS_SHIFTS[d] = np.array(list(itertools.product((-1, 0, 1), repeat=d)), dtype=float)
    return _TORUS_SHIFTS[d]


class FlatTorus(Manifold):
    """``R^d / (Z b_1 + ... + Z b_d)`` with the lattice basis as matrix rows."""

    kind = "flat_torus"

    def __init__(self, basis):
        basis = np.atleast_2d(np.asarray(basis, dtype=float))
        d = basis.shape[0]
        if basis.shape != (d, d):
            raise ValueError("lattice basis must be a square matrix (rows are vectors)")
        if d > 3:
            raise ValueError("flat tori are supported up to dimension 3")
        if abs(np.linalg.det(basis)) < 1e-12:
            raise ValueError("lattice basis vectors must be linearly independent")
        self.basis = basis
        self.basis_inv = np.linalg.inv(basis)
        self.dim = self.ambient_dim = d
        coeffs = np.array(
            [k for k in itertools.product(range(-2, 3), repeat=d) if any(k)], dtype=float
        )
        self._inj = 0.5 * float(np.min(_norm(coeffs @ basis)))
        self._shifts = _unit_shifts(d) @ basis

    @classmethod
    def unit(cls, d: int) -> "FlatTorus":
        return cls(np.eye(d))

    def to_lattice(self, y):
        return np.asarray(y, dtype=float) @ self.basis_inv

    def from_lattice(self, c):
        return np.asarray(c, dtype=float) @ self.basis

    def project_jvp(self, y, w):
        c = self.to_lattice(y)
        c = c - np.floor(c)
        c = np.where(c >= 1.0, c - 1.0, c)
        return self.from_lattice(c), w

    def _shortest(self, diff):
        c = self.to_lattice(diff)
        base = self.from_lattice(c - np.round(c))
        best = base
        best_sq = _dot(base, base)
        for shift in self._shifts:
            cand = base + shift
            sq = _dot(cand, cand)
            take = sq < best_sq
            if take.any():
                best = np.where(take[..., None], cand, best)
                best_sq = np.where(take, sq, best_sq)
        return best, np.sqrt(best_sq)

    def _log(self, x, y):
        return self._shortest(y - x)

    def exp(self, x, v):
        return self.project(np.asarray(x, dtype=float) + np.asarray(v, dtype=float))

    def injectivity_radius(self, x=None):
        if x is None:
            return self._inj
        return np.full(np.shape(x)[:-1], self._inj)

    def constraint_residual(self, x):
        c = self.to_lattice(x)
        return np.max(np.maximum(-c, 0.0) + np.maximum(c - 1.0, 0.0) + (c == 1.0), axis=-1)

    def random_point(self, rng, size=()):
        shape = _shape(size)
        return self.project(rng.random(shape + (self.dim,)) @ self.basis)

    def to_config(self):
        if np.array_equal(self.basis, np.eye(self.dim)):
            return {"kind": self.kind, "dim": self.dim}
        return {"kind": self.kind, "dim": self.dim, "basis_length": self.basis.tolist()}


def minkowski(a, b):
    return -a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


class Hyperbolic2(Manifold):
    """Hyperbolic plane of curvature -1 in the hyperboloid model."""

    kind = "hyperbolic2"

    def __init__(self, inf_radius: float = TOL.inf_radius):
        self.dim = 2
        self.ambient_dim = 3
        self.inf_radius = float(inf_radius)

    def inner(self, x, u, v):
        return minkowski(np.asarray(u, dtype=float), np.asarray(v, dtype=float))

    def exp(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        n = np.sqrt(np.maximum(minkowski(v, v), 0.0))[..., None]
        with np.errstate(invalid="ignore", divide="ignore"):
            shc = np.where(n > 1e-8, np.sinh(n) / np.where(n > 1e-8, n, 1.0), 1.0 + n**2 / 6.0)
        return np.cosh(n) * x + shc * v

    def _log(self, x, y):
        c = -minkowski(x, y)
        u = y - c[..., None] * x
        un = np.sqrt(np.maximum(minkowski(u, u), 0.0))
        d = np.where(c > 2.0, np.arccosh(np.maximum(c, 1.0)), np.arcsinh(un))
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(un > 0, d / np.where(un > 0, un, 1.0), 1.0)
        return scale[..., None] * u, d

    def injectivity_radius(self, x=None):
        if x is None:
            return self.inf_radius
        return np.full(np.shape(x)[:-1], self.inf_radius)

    def project_jvp(self, y, w):
        y = np.asarray(y, dtype=float)
        q = -minkowski(y, y)
        if np.any(q <= 1e-12) or np.any(y[..., 0] <= 0):
            raise ProjectionIllConditioned("point is not in the future light cone")
        sq = np.sqrt(q)[..., None]
        p = y / sq
        if w is None:
            return p, None
        w = np.asarray(w, dtype=float)
        return p, (w + minkowski(p, w)[..., None] * p) / sq

    def project_tangent(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return v + minkowski(x, v)[..., None] * x

    def constraint_residual(self, x):
        x = np.asarray(x, dtype=float)
        # relative to x0^2: the form itself cancels two numbers of that size
        return np.abs(minkowski(x, x) + 1.0) / np.maximum(1.0, x[..., 0] ** 2) + (x[..., 0] <= 0)

    def tangent_residual(self, x, v):
        return np.abs(minkowski(np.asarray(x, dtype=float), np.asarray(v, dtype=float)))

    def random_point(self, rng, size=(), spread=1.5):
        shape = _shape(size)
        origin = np.broadcast_to(np.array([1.0, 0.0, 0.0]), shape + (3,))
        v = np.zeros(shape + (3,))
        v[..., 1:] = spread * rng.standard_normal(shape + (2,))
        return self.exp(origin, v)

    def to_config(self):
        cfg = {"kind": self.kind}
        if self.inf_radius != TOL.inf_radius:
            cfg["inf_radius_length"] = self.inf_radius
        return cfg


def manifold_from_config(cfg: dict[str, Any]) -> Manifold:
    """Build a manifold from its ``{"kind": ..., ...}`` config record."""
    kind = cfg.get("kind")
    sentinel = float(cfg.get("inf_radius_length", TOL.inf_radius))
    try:
        if kind == "euclidean":
            return Euclidean(int(cfg["dim"]), inf_radius=sentinel)
        if kind == "sphere":
            return Sphere(int(cfg.get("dim", 2)), float(cfg.get("radius_length", 1.0)))
        if kind == "flat_torus":
            if "basis_length" in cfg:
                return FlatTorus(cfg["basis_length"])
            return FlatTorus.unit(int(cfg["dim"]))
        if kind == "hyperbolic2":
            return Hyperbolic2(inf_radius=sentinel)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigInvalid(f"manifold: {exc}") from exc
    raise ConfigInvalid(f"manifold.kind: unknown kind {kind!r}")
