"""Vector-field specifications for Stratonovich SDEs ``dx = A(x) dt + X(x) o dB``.

A spec provides the drift ``A`` and the diffusion frame ``X`` (one column
per noise coordinate) as ambient-space expressions that are tangent on the
manifold, together with their directional derivatives, which drive the
variational (tangent) equation.  Built-in specs use analytic derivatives;
:class:`VectorFieldSpec` falls back to central differences.
"""

from __future__ import annotations

from typing import Any, Callable

import numpy as np

from .errors import ConfigInvalid
from .manifolds import Euclidean, FlatTorus, Hyperbolic2, Manifold, Sphere, minkowski


class VectorFieldSpec:
    """Drift and diffusion frame of a flow SDE on ``manifold``.

    Subclasses override :meth:`drift` and :meth:`diffusion`; overriding the
    ``*_jvp`` methods is optional.
    """

    name = "custom"
    fd_step = 1e-6

    def __init__(self, manifold: Manifold, m: int):
        self.manifold = manifold
        self.m = int(m)

    @property
    def params(self) -> dict[str, Any]:
        return {}

    def drift(self, x):
        return np.zeros(np.shape(x))

    def diffusion(self, x):
        return np.zeros(np.shape(x) + (self.m,))

    def _fd(self, fn, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        h = self.fd_step * np.maximum(1.0, np.sqrt(np.sum(x * x, axis=-1)))[..., None]
        fwd = fn(x + h * v)
        bwd = fn(x - h * v)
        if fwd.ndim > x.ndim:
            h = h[..., None]
        return (fwd - bwd) / (2.0 * h)

    def drift_jvp(self, x, v):
        """Directional derivative ``DA(x) v``."""
        return self._fd(self.drift, x, v)

    def diffusion_jvp(self, x, v):
        """Directional derivative of every frame column, shape ``(..., D, m)``."""
        return self._fd(self.diffusion, x, v)

    def to_config(self) -> dict[str, Any]:
        return {"name": self.name, "params": self.params}

    def __repr__(self):
        return f"{type(self).__name__}({self.params})"


class ZeroField(VectorFieldSpec):
    """Frozen flow: both fields vanish, so every point stays put."""

    name = "zero"

    def drift_jvp(self, x, v):
        return np.zeros(np.shape(x))

    def diffusion_jvp(self, x, v):
        return np.zeros(np.shape(x) + (self.m,))

    @property
    def params(self):
        return {"m": self.m}


class LinearContraction(VectorFieldSpec):
    """``dx = -rate * x dt + sigma_add dB`` on ``E^d`` (m = d)."""

    name = "linear_contraction"

    def __init__(self, dim: int = 2, rate: float = 1.0, sigma_add: float = 0.0, manifold=None):
        super().__init__(manifold or Euclidean(dim), dim)
        if not isinstance(self.manifold, Euclidean) or self.manifold.dim != dim:
            raise ValueError("linear_contraction lives on E^d")
        self.rate = float(rate)
        self.sigma_add = float(sigma_add)
        self._frame = self.sigma_add * np.eye(dim)

    @property
    def params(self):
        return {"dim": self.m, "rate_per_time": self.rate, "sigma_add": self.sigma_add}

    def drift(self, x):
        return -self.rate * np.asarray(x, dtype=float)

    def diffusion(self, x):
        return np.broadcast_to(self._frame, np.shape(x) + (self.m,))

    def drift_jvp(self, x, v):
        return -self.rate * np.asarray(v, dtype=float)

    def diffusion_jvp(self, x, v):
        return np.zeros(np.shape(x) + (self.m,))


class GeometricMultiplicative(VectorFieldSpec):
    """``dx = -rate * x dt + sigma_mul * x o dB`` on the line."""

    name = "geometric_multiplicative"

    def __init__(self, rate: float = 1.0, sigma_mul: float = 0.5, manifold=None):
        super().__init__(manifold or Euclidean(1), 1)
        if not isinstance(self.manifold, Euclidean) or self.manifold.dim != 1:
            raise ValueError("geometric_multiplicative lives on E^1")
        self.rate = float(rate)
        self.sigma_mul = float(sigma_mul)

    @property
    def params(self):
        return {"rate_per_time": self.rate, "sigma_mul": self.sigma_mul}

    def drift(self, x):
        return -self.rate * np.asarray(x, dtype=float)

    def diffusion(self, x):
        return self.sigma_mul * np.asarray(x, dtype=float)[..., None]

    def drift_jvp(self, x, v):
        return -self.rate * np.asarray(v, dtype=float)

    def diffusion_jvp(self, x, v):
        return self.sigma_mul * np.asarray(v, dtype=float)[..., None]


class TorusTranslation(VectorFieldSpec):
    """Random rigid translations ``dx = sigma dB`` of a flat torus."""

    name = "torus_translation"

    def __init__(self, manifold: FlatTorus | None = None, sigma: float = 1.0, dim: int = 2):
        manifold = manifold or FlatTorus.unit(dim)
        if not isinstance(manifold, FlatTorus):
            raise ValueError("torus_translation lives on a flat torus")
        super().__init__(manifold, manifold.dim)
        self.sigma = float(sigma)
        self._frame = self.sigma * np.eye(manifold.dim)

    @property
    def params(self):
        return {"sigma": self.sigma}

    def diffusion(self, x):
        return np.broadcast_to(self._frame, np.shape(x) + (self.m,))

    def drift_jvp(self, x, v):
        return np.zeros(np.shape(x))

    def diffusion_jvp(self, x, v):
        return np.zeros(np.shape(x) + (self.m,))


class SphereGradientFrame(VectorFieldSpec):
    """Gradient Brownian system on ``S^d``: column i is the tangential part of e_i."""

    name = "sphere_gradient_frame"

    def __init__(self, manifold: Sphere | None = None, radius: float = 1.0):
        manifold = manifold or Sphere(2, radius)
        if not isinstance(manifold, Sphere):
            raise ValueError("sphere_gradient_frame lives on a sphere")
        super().__init__(manifold, manifold.ambient_dim)
        self._r2 = manifold.radius**2

    def diffusion(self, x):
        x = np.asarray(x, dtype=float)
        return np.eye(self.m) - x[..., :, None] * x[..., None, :] / self._r2

    def drift_jvp(self, x, v):
        return np.zeros(np.shape(x))

    def diffusion_jvp(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return -(v[..., :, None] * x[..., None, :] + x[..., :, None] * v[..., None, :]) / self._r2


def _acosh_ratio(c):
    """``arccosh(c) / sqrt(c^2 - 1)`` and its derivative, analytic through c = 1."""
    z = c - 1.0
    small = np.abs(z) < 1e-3
    zs = np.where(small, z, 0.0)
    f_series = 1.0 - zs / 3.0 + 2.0 * zs**2 / 15.0 - 2.0 * zs**3 / 35.0
    df_series = -1.0 / 3.0 + 4.0 * zs / 15.0 - 6.0 * zs**2 / 35.0
    cl = np.where(small, 2.0, c)
    s2 = cl * cl - 1.0
    # below c = 1 the ratio continues analytically as arccos(c) / sqrt(1 - c^2)
    with np.errstate(invalid="ignore"):
        f_big = np.where(cl > 1.0, np.arccosh(np.maximum(cl, 1.0)), np.arccos(np.clip(cl, -1.0, 1.0)))
    f_big = f_big / np.sqrt(np.abs(s2))
    df_big = (1.0 - cl * f_big) / s2
    return np.where(small, f_series, f_big), np.where(small, df_series, df_big)


class HyperbolicContraction(VectorFieldSpec):
    """Pull toward ``base`` with drift ``rate * log_x(base)`` plus additive noise on ``H^2``.

    The noise frame is a Minkowski-orthonormal frame at ``base`` carried to
    ``x`` by parallel transport along the geodesic, so its columns are unit
    tangent vectors everywhere.
    """

    name = "hyperbolic_contraction"

    def __init__(self, rate: float = 1.0, sigma: float = 0.3, base=(1.0, 0.0, 0.0), manifold=None):
        super().__init__(manifold or Hyperbolic2(), 2)
        if not isinstance(self.manifold, Hyperbolic2):
            raise ValueError("hyperbolic_contraction lives on H^2")
        self.rate = float(rate)
        self.sigma = float(sigma)
        self.base = np.asarray(base, dtype=float)
        if abs(minkowski(self.base, self.base) + 1.0) > 1e-9 or self.base[0] <= 0:
            raise ValueError("base point must lie on the hyperboloid")
        p = self.base
        e1 = np.array([0.0, 1.0, 0.0]) + minkowski(p, np.array([0.0, 1.0, 0.0])) * p
        e1 /= np.sqrt(minkowski(e1, e1))
        e2 = np.array([0.0, 0.0, 1.0]) + minkowski(p, np.array([0.0, 0.0, 1.0])) * p
        e2 = e2 - minkowski(e1, e2) * e1
        self._frame = np.stack([e1, e2 / np.sqrt(minkowski(e2, e2))], axis=-1)  # (3, 2)

    @property
    def params(self):
        return {"rate_per_time": self.rate, "sigma": self.sigma, "base": self.base.tolist()}

    def drift(self, x):
        x = np.asarray(x, dtype=float)
        c = -minkowski(x, self.base)
        f, _ = _acosh_ratio(c)
        return self.rate * f[..., None] * (self.base - c[..., None] * x)

    def drift_jvp(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        c = -minkowski(x, self.base)
        dc = -minkowski(v, self.base)
        f, df = _acosh_ratio(c)
        u = self.base - c[..., None] * x
        du = -dc[..., None] * x - c[..., None] * v
        return self.rate * ((df * dc)[..., None] * u + f[..., None] * du)

    def _xu(self, x):
        # Minkowski pairings <x, e_k>, shape (..., 2)
        return -x[..., :1] * self._frame[0] + x[..., 1:2] * self._frame[1] + x[..., 2:3] * self._frame[2]

    def diffusion(self, x):
        # P(u) = u + <x, u> / (1 + c) (base + x),  c = -<base, x>
        x = np.asarray(x, dtype=float)
        c = -minkowski(x, self.base)
        a = self._xu(x) / (1.0 + c)[..., None]
        cols = self._frame + (self.base + x)[..., :, None] * a[..., None, :]
        return self.sigma * cols

    def diffusion_jvp(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        c = -minkowski(x, self.base)
        dc = -minkowski(v, self.base)
        xu, vu = self._xu(x), self._xu(v)
        k = (1.0 + c)[..., None]
        a = xu / k
        da = vu / k - xu * dc[..., None] / k**2
        cols = (self.base + x)[..., :, None] * da[..., None, :] + v[..., :, None] * a[..., None, :]
        return self.sigma * cols


_REGISTRY: dict[str, Callable[..., VectorFieldSpec]] = {}


def _register(name):
    def deco(fn):
        _REGISTRY[name] = fn
        return fn
    return deco


@_register("zero")
def _zero(manifold, params):
    return ZeroField(manifold, int(params.get("m", 1)))


@_register("linear_contraction")
def _linear(manifold, params):
    return LinearContraction(manifold.dim, float(params.get("rate_per_time", 1.0)),
                             float(params.get("sigma_add", 0.0)), manifold=manifold)


@_register("geometric_multiplicative")
def _geometric(manifold, params):
    return GeometricMultiplicative(float(params.get("rate_per_time", 1.0)),
                                   float(params.get("sigma_mul", 0.5)), manifold=manifold)


@_register("torus_translation")
def _torus(manifold, params):
    return TorusTranslation(manifold, float(params.get("sigma", 1.0)))


@_register("sphere_gradient_frame")
def _sphere(manifold, params):
    return SphereGradientFrame(manifold)


@_register("hyperbolic_contraction")
def _hyperbolic(manifold, params):
    return HyperbolicContraction(float(params.get("rate_per_time", 1.0)), float(params.get("sigma", 0.3)),
                                 tuple(params.get("base", (1.0, 0.0, 0.0))), manifold=manifold)


def field_from_config(manifold: Manifold, cfg: dict[str, Any]) -> VectorFieldSpec:
    name = cfg.get("name")
    if name not in _REGISTRY:
        raise ConfigInvalid(f"vector_field.name: unknown spec {name!r} (known: {sorted(_REGISTRY)})")
    try:
        return _REGISTRY[name](manifold, dict(cfg.get("params", {})))
    except (ValueError, TypeError) as exc:
        raise ConfigInvalid(f"vector_field: {exc}") from exc
