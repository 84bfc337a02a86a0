"""Discretized maps ``sigma: S^n -> M`` for n = 1 (closed polylines) and n = 2 (icospheres)."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from .errors import ConfigInvalid, ResolutionTooCoarse
from .manifolds import Euclidean, FlatTorus, Hyperbolic2, Manifold, Sphere

__all__ = ["SphereMapDiscretization", "icosphere", "circle_domain", "make_fixture", "FIXTURES"]


def circle_domain(V: int) -> np.ndarray:
    theta = 2.0 * np.pi * np.arange(V) / V
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def icosphere(level: int = 1):
    """Vertices (unit vectors) and triangle faces of a subdivided icosahedron."""
    phi = (1.0 + 5.0**0.5) / 2.0
    verts = [(-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
             (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
             (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(level):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                mid = verts[i] + verts[j]
                verts.append(mid / np.linalg.norm(mid))
                cache[key] = len(verts) - 1
            return cache[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = refined
    return np.array(verts), np.array(faces, dtype=np.int64)


def _edges(faces: np.ndarray) -> np.ndarray:
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e.sort(axis=1)
    return np.unique(e, axis=0)


@dataclass(frozen=True)
class SphereMapDiscretization:
    """Image of a vertex mesh on ``S^n`` under ``sigma``.

    ``map_fn``, when present, evaluates the underlying smooth map at arbitrary
    domain points; otherwise :meth:`evaluate` interpolates geodesically on
    the mesh.
    """

    n: int
    domain: np.ndarray = field(repr=False)
    image: np.ndarray = field(repr=False)
    manifold: Manifold
    faces: np.ndarray | None = field(default=None, repr=False)
    label: str = ""
    map_fn: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError("only S^1 and S^2 domains are supported")
        if self.n == 2 and self.faces is None:
            raise ValueError("an S^2 mesh needs faces")
        if len(self.domain) != len(self.image):
            raise ValueError("domain and image vertex counts differ")

    @property
    def V(self) -> int:
        return len(self.domain)

    def with_image(self, image) -> "SphereMapDiscretization":
        """Same domain mesh, new image vertices (e.g. after pushing by a flow)."""
        return replace(self, image=np.asarray(image, dtype=float), map_fn=None)

    def edges(self) -> np.ndarray:
        if self.n == 1:
            i = np.arange(self.V)
            return np.stack([i, (i + 1) % self.V], axis=1)
        return _edges(self.faces)

    def edge_lengths(self, image=None) -> np.ndarray:
        image = self.image if image is None else image
        e = self.edges()
        return self.manifold.dist(image[..., e[:, 0], :], image[..., e[:, 1], :])

    def check(self, r_inj: float | None = None):
        """Raise :class:`ResolutionTooCoarse` if an edge reaches half the injectivity radius."""
        resid = self.manifold.constraint_residual(self.image)
        if np.max(resid) > 1e-8:
            raise ValueError("image vertices are off the manifold")
        r_inj = self.manifold.injectivity_radius_set(self.image) if r_inj is None else r_inj
        lengths = self.edge_lengths()
        if np.max(lengths) >= 0.5 * r_inj:
            raise ResolutionTooCoarse(f"edge of length {np.max(lengths):.4g} >= 0.5 R_inj = {0.5 * r_inj:.4g}")
        return self

    # -- evaluation away from vertices ----------------------------------------
    def evaluate(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if self.map_fn is not None:
            return self.map_fn(points)
        if self.n == 1:
            return self._interp_circle(points)
        return self._interp_sphere(points)

    def _interp_circle(self, points):
        M = self.manifold
        theta = np.mod(np.arctan2(points[..., 1], points[..., 0]), 2.0 * np.pi)
        pos = theta / (2.0 * np.pi) * self.V
        i = np.floor(pos).astype(int) % self.V
        frac = pos - np.floor(pos)
        a = self.image[i]
        b = self.image[(i + 1) % self.V]
        return M.exp(a, frac[..., None] * M.log(a, b, check=False))

    def _interp_sphere(self, points):
        M = self.manifold
        tri = self.domain[self.faces]  # (F, 3 corners, 3 coords)
        inv = np.linalg.inv(np.transpose(tri, (0, 2, 1)))
        flat = points.reshape(-1, 3)
        coef = np.einsum("fij,qj->qfi", inv, flat)
        score = coef.min(axis=-1)
        face = np.argmax(score, axis=1)
        lam = coef[np.arange(len(flat)), face]
        lam = np.maximum(lam, 0.0)
        lam = lam / lam.sum(axis=-1, keepdims=True)
        idx = self.faces[face]
        a, b, c = (self.image[idx[:, k]] for k in range(3))
        v = lam[:, 1, None] * M.log(a, b, check=False) + lam[:, 2, None] * M.log(a, c, check=False)
        return M.exp(a, v).reshape(points.shape[:-1] + (M.ambient_dim,))

    def circle_samples(self, plane_basis, V: int, fd_step: float = 1e-5):
        """Images and tangents ``T sigma(e'(s))`` at ``V`` points of a great circle.

        ``plane_basis`` is a ``(2, n+1)`` orthonormal pair.  With a smooth map
        the tangent is a central difference of ``sigma`` with step ``fd_step``
        along the circle; a mesh-only map uses differences over adjacent
        samples, which underestimates lengths by ``O(h^2)`` and at corners.
        """
        M = self.manifold
        b = np.asarray(plane_basis, dtype=float)
        s = 2.0 * np.pi * np.arange(V) / V

        def circle(angle):
            return np.cos(angle)[:, None] * b[0] + np.sin(angle)[:, None] * b[1]

        dom = circle(s)
        if self.n == 1 and V == self.V and np.allclose(dom, self.domain, atol=1e-12):
            img = self.image
        else:
            img = self.evaluate(dom)
        if self.map_fn is not None:
            nxt, prv, h = self.map_fn(circle(s + fd_step)), self.map_fn(circle(s - fd_step)), fd_step
        else:
            nxt, prv, h = np.roll(img, -1, axis=0), np.roll(img, 1, axis=0), 2.0 * np.pi / V
        tangent = (M.log(img, nxt, check=False) - M.log(img, prv, check=False)) / (2.0 * h)
        return dom, img, M.project_tangent(img, tangent)

    def to_config(self) -> dict[str, Any]:
        return {"label": self.label, "n": self.n, "vertices": self.V}


# -- fixtures --------------------------------------------------------------------

def _tangent_frame(M: Manifold, center: np.ndarray):
    """Two orthonormal tangent vectors at ``center`` (needs dim >= 2)."""
    if isinstance(M, Hyperbolic2):
        c = center
        e1 = M.project_tangent(c, np.array([0.0, 1.0, 0.0]))
        e1 = e1 / M.norm(c, e1)
        e2 = M.project_tangent(c, np.array([0.0, 0.0, 1.0]))
        e2 = e2 - M.inner(c, e1, e2) * e1
        return e1, e2 / M.norm(c, e2)
    basis = np.eye(M.ambient_dim)
    frame = []
    for k in range(M.ambient_dim):
        u = M.project_tangent(center, basis[k])
        for f in frame:
            u = u - np.dot(u, f) * f
        if np.linalg.norm(u) > 1e-6:
            frame.append(u / np.linalg.norm(u))
        if len(frame) == 2:
            return frame[0], frame[1]
    raise ConfigInvalid("fixture needs a manifold of dimension >= 2")


def _default_center(M: Manifold):
    if isinstance(M, Sphere):
        c = np.zeros(M.ambient_dim)
        c[-1] = M.radius
        return c
    if isinstance(M, Hyperbolic2):
        return np.array([1.0, 0.0, 0.0])
    if isinstance(M, FlatTorus):
        return M.project(0.5 * np.ones(M.dim) @ M.basis)
    return np.zeros(M.ambient_dim)


def _circle(M, V, radius_length=0.5, center=None):
    c = _default_center(M) if center is None else np.asarray(center, dtype=float)
    if M.dim == 1:
        raise ConfigInvalid("sigma.fixture circle needs dim >= 2; use segment_loop on a line")
    e1, e2 = _tangent_frame(M, c)

    def fn(p):
        return M.exp(c, radius_length * (p[..., 0, None] * e1 + p[..., 1, None] * e2))

    return 1, circle_domain(V), None, fn


def _segment_loop(M, V, radius_length=1.0, center=None):
    c = _default_center(M) if center is None else np.asarray(center, dtype=float)
    if M.dim == 1:
        e1 = np.ones(1)
    else:
        e1, _ = _tangent_frame(M, c)

    def fn(p):
        return M.exp(c, radius_length * p[..., 0, None] * e1)

    return 1, circle_domain(V), None, fn


def _torus_winding(M, V, winding=None, offset=None):
    if not isinstance(M, FlatTorus):
        raise ConfigInvalid("sigma.fixture torus_winding needs a flat torus")
    w = np.zeros(M.dim)
    w[0] = 1
    w = w if winding is None else np.asarray(winding, dtype=float)
    off = 0.5 * np.ones(M.dim) @ M.basis if offset is None else np.asarray(offset, dtype=float)
    step = w @ M.basis

    def fn(p):
        s = np.mod(np.arctan2(p[..., 1], p[..., 0]), 2 * np.pi) / (2 * np.pi)
        return M.project(off + s[..., None] * step)

    return 1, circle_domain(V), None, fn


def _identity_sphere(M, level):
    if not isinstance(M, Sphere) or M.dim != 2:
        raise ConfigInvalid("sigma.fixture identity_sphere needs S^2")
    verts, faces = icosphere(level)
    return 2, verts, faces, lambda p: M.radius * p / np.linalg.norm(p, axis=-1, keepdims=True)


def _ellipsoid(M, level, axes_length=(1.0, 0.7, 0.5), center=None):
    if not isinstance(M, Euclidean) or M.dim != 3:
        raise ConfigInvalid("sigma.fixture ellipsoid needs E^3")
    verts, faces = icosphere(level)
    a = np.asarray(axes_length, dtype=float)
    c = np.zeros(3) if center is None else np.asarray(center, dtype=float)
    return 2, verts, faces, lambda p: c + a * p


def _disk_fold(M, level, radius_length=0.5, center=None):
    c = _default_center(M) if center is None else np.asarray(center, dtype=float)
    e1, e2 = _tangent_frame(M, c)
    verts, faces = icosphere(level)

    def fn(p):
        return M.exp(c, radius_length * (p[..., 0, None] * e1 + p[..., 1, None] * e2))

    return 2, verts, faces, fn


FIXTURES: dict[str, Callable] = {
    "circle": _circle,
    "segment_loop": _segment_loop,
    "torus_winding": _torus_winding,
    "identity_sphere": _identity_sphere,
    "ellipsoid": _ellipsoid,
    "disk_fold": _disk_fold,
}


def make_fixture(name: str, manifold: Manifold, resolution: int = 64, **params) -> SphereMapDiscretization:
    """Build a named fixture.

    ``resolution`` is the vertex count for loops and the subdivision level for
    icospheres (1-3).
    """
    if name not in FIXTURES:
        raise ConfigInvalid(f"sigma.fixture: unknown fixture {name!r} (known: {sorted(FIXTURES)})")
    n_level = name in ("identity_sphere", "ellipsoid", "disk_fold")
    if n_level and resolution not in (1, 2, 3):
        raise ConfigInvalid("sigma.resolution: icosphere level must be 1, 2 or 3")
    try:
        n, domain, faces, fn = FIXTURES[name](manifold, int(resolution), **params)
    except TypeError as exc:
        raise ConfigInvalid(f"sigma.params: {exc}") from exc
    image = fn(domain)
    return SphereMapDiscretization(n, domain, image, manifold, faces, label=name, map_fn=fn)
