"""Moment-stability estimates and length/diameter control of pushed sphere maps."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.special import ndtri
from scipy.stats import qmc

from . import brownian
from .flow import FlowRealization, integrate, iter_ensemble
from .fields import VectorFieldSpec
from .manifolds import Manifold
from .spheremaps import SphereMapDiscretization

CIRCLE_SAMPLES = 720
BOUND_RTOL = 1e-3


@dataclass(frozen=True)
class GrassmannPlane:
    """Oriented orthonormal pair spanning a 2-plane through the origin of R^{n+1}."""

    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.shape[0] != 2 or np.max(np.abs(b @ b.T - np.eye(2))) > 1e-12:
            raise ValueError("plane basis must be two orthonormal vectors")

    @classmethod
    def through(cls, p, q) -> "GrassmannPlane":
        """The plane containing unit vectors ``p`` and ``q`` (any plane if they are parallel)."""
        p = np.asarray(p, dtype=float)
        p = p / np.linalg.norm(p)
        u = np.asarray(q, dtype=float) - np.dot(q, p) * p
        if np.linalg.norm(u) < 1e-9:
            k = int(np.argmin(np.abs(p)))
            u = np.eye(len(p))[k] - p[k] * p
        u = u / np.linalg.norm(u)
        u = u - np.dot(u, p) * p
        return cls(np.stack([p, u / np.linalg.norm(u)]))


def identity_plane(n: int = 1) -> GrassmannPlane:
    return GrassmannPlane(np.eye(n + 1)[:2])


def grassmann_planes(n: int, count: int = 64) -> list[GrassmannPlane]:
    """Deterministic low-discrepancy planes; for ``n = 1`` only S^1 itself.

    The list for ``count`` is a prefix of the list for any larger count.
    """
    if n == 1:
        return [identity_plane(1)]
    u = qmc.Halton(d=2 * (n + 1), scramble=False).random(count + 1)[1:]
    g = ndtri(np.clip(u, 1e-12, 1 - 1e-12)).reshape(count, 2, n + 1)
    planes = []
    for a, b in g:
        a = a / np.linalg.norm(a)
        b = b - np.dot(b, a) * a
        b = b / np.linalg.norm(b)
        planes.append(GrassmannPlane(np.stack([a, b - np.dot(b, a) * a])))
    return planes


def great_circle(e: GrassmannPlane, V: int):
    """Arc-length samples ``e(s_k)`` of the unit great circle and unit tangents ``e'(s_k)``."""
    s = 2.0 * np.pi * np.arange(V) / V
    b1, b2 = np.asarray(e.basis, dtype=float)
    pts = np.cos(s)[:, None] * b1 + np.sin(s)[:, None] * b2
    tangents = -np.sin(s)[:, None] * b1 + np.cos(s)[:, None] * b2
    return pts, tangents


def _circle_V(sigma: SphereMapDiscretization, V: int | None) -> int:
    if V is not None:
        return V
    if sigma.map_fn is None:
        return sigma.V
    return max(sigma.V, CIRCLE_SAMPLES)


# -- compact tangent sets -------------------------------------------------------

@dataclass(frozen=True)
class CompactTangentSet:
    bases: np.ndarray = field(repr=False)
    vectors: np.ndarray = field(repr=False)
    description: str = ""

    def __post_init__(self):
        if len(self.bases) == 0 or np.shape(self.bases) != np.shape(self.vectors):
            raise ValueError("tangent set needs matching, non-empty bases and vectors")

    def norms(self, manifold: Manifold) -> np.ndarray:
        return manifold.norm(self.bases, self.vectors)


def tangent_set_from_map(sigma: SphereMapDiscretization, directions: int = 4,
                         h: float = 1e-3) -> CompactTangentSet:
    """Sample ``T sigma(U S^n)``: images of unit tangent vectors at the mesh vertices."""
    M = sigma.manifold
    if sigma.n == 1:
        _, img, tan = sigma.circle_samples(identity_plane(1).basis, sigma.V)
        return CompactTangentSet(img, tan, f"T sigma(U S^1) for {sigma.label or 'loop'}")
    bases, vecs = [], []
    for p in sigma.domain:
        a = np.eye(3)[int(np.argmin(np.abs(p)))]
        f1 = a - np.dot(a, p) * p
        f1 /= np.linalg.norm(f1)
        f2 = np.cross(p, f1)
        for j in range(directions):
            ang = np.pi * j / directions
            u = np.cos(ang) * f1 + np.sin(ang) * f2
            fwd = sigma.evaluate(np.cos(h) * p + np.sin(h) * u)
            bwd = sigma.evaluate(np.cos(h) * p - np.sin(h) * u)
            base = sigma.evaluate(p)
            v = (M.log(base, fwd, check=False) - M.log(base, bwd, check=False)) / (2 * h)
            bases.append(base)
            vecs.append(M.project_tangent(base, v))
    return CompactTangentSet(np.array(bases), np.array(vecs), f"T sigma(U S^2) for {sigma.label or 'sphere map'}")


# -- lengths and the diameter bound ---------------------------------------------

def _lengths_from_norms(norms: np.ndarray, V: int) -> np.ndarray:
    # periodic trapezoid rule on V equispaced samples
    return norms.reshape(norms.shape[:-1] + (-1, V)).mean(axis=-1) * 2.0 * np.pi


def circle_length_under_flow(sigma: SphereMapDiscretization, R: FlowRealization, t: float,
                             e: GrassmannPlane, V: int | None = None) -> float:
    """Length of ``xi_t o sigma o e`` from the tangent flow of ``T sigma(e'(s))``."""
    V = _circle_V(sigma, V)
    _, img, tan = sigma.circle_samples(e.basis, V)
    res = R.evaluate(img, t, v=tan)
    norms = sigma.manifold.norm(res.points, res.tangents)
    return float(_lengths_from_norms(norms, V)[0])


@dataclass(frozen=True)
class DiameterBound:
    diam: float
    half_sup_length: float
    holds: bool


def _bound_holds(diam, half_sup):
    return diam <= half_sup * (1.0 + BOUND_RTOL) + 1e-12


def diameter_bound_check(sigma: SphereMapDiscretization, R: FlowRealization, t: float,
                         circles: Sequence[GrassmannPlane] | None = None, V: int | None = None) -> DiameterBound:
    """Check ``diam(sigma_t) <= 1/2 sup_e length(sigma_t o e)`` on one realization.

    For ``n = 2`` the great circle through the two domain vertices realizing
    the diameter is always added to ``circles``.
    """
    M = sigma.manifold
    pushed = R.evaluate(sigma.image, t).points
    d = M.pairwise_dist(pushed)
    i, j = np.unravel_index(np.argmax(d), d.shape)
    diam = float(d[i, j])
    if sigma.n == 1:
        planes = [identity_plane(1)]
    else:
        planes = list(circles or []) + [GrassmannPlane.through(sigma.domain[i], sigma.domain[j])]
    half = 0.5 * max(circle_length_under_flow(sigma, R, t, e, V) for e in planes)
    return DiameterBound(diam, half, _bound_holds(diam, half))


def _block_trials(trials, block_size):
    trials = np.arange(trials) if isinstance(trials, int) else np.asarray(trials)
    for s in range(0, len(trials), block_size):
        yield trials[s:s + block_size]


def diameter_bound_ensemble(sigma: SphereMapDiscretization, spec: VectorFieldSpec, t: float,
                            trials: int, seed: int, dt: float,
                            circles: Sequence[GrassmannPlane] | None = None, V: int | None = None,
                            block_size: int = 128):
    """Per-realization diameters and half sup-lengths, arrays of length ``trials``."""
    M = sigma.manifold
    n = brownian.n_steps_for(t, dt) if t > 0 else 0
    V = _circle_V(sigma, V)
    planes = [identity_plane(1)] if sigma.n == 1 else list(circles or [])
    fixed = [sigma.circle_samples(e.basis, V) for e in planes]
    diams, halves = [], []
    for block in _block_trials(trials, block_size):
        dB = brownian.increment_block(seed, block, n, spec.m, dt) if n else np.zeros((len(block), 0, spec.m))
        pushed = integrate(spec, sigma.image, dB, dt)["x"]
        d = M.pairwise_dist(pushed)
        flat = d.reshape(len(block), -1).argmax(axis=1)
        ii, jj = np.unravel_index(flat, d.shape[1:])
        diam = d.reshape(len(block), -1).max(axis=1)
        imgs = [np.broadcast_to(img, (len(block),) + img.shape) for _, img, _ in fixed]
        tans = [np.broadcast_to(tan, (len(block),) + tan.shape) for _, _, tan in fixed]
        if sigma.n == 2:
            extra = [sigma.circle_samples(GrassmannPlane.through(sigma.domain[a], sigma.domain[b]).basis, V)
                     for a, b in zip(ii, jj)]
            imgs.append(np.stack([x[1] for x in extra]))
            tans.append(np.stack([x[2] for x in extra]))
        x0 = np.concatenate(imgs, axis=1)
        v0 = np.concatenate(tans, axis=1)
        out = integrate(spec, x0, dB, dt, v0=v0, keep_positions=False)
        lengths = _lengths_from_norms(M.norm(out["x"], out["v"]), V)
        diams.append(diam)
        halves.append(0.5 * lengths.max(axis=1))
    diams = np.concatenate(diams)
    halves = np.concatenate(halves)
    return diams, halves, _bound_holds(diams, halves)


def circle_lengths(sigma: SphereMapDiscretization, spec: VectorFieldSpec, t: float,
                   circles: Sequence[GrassmannPlane], trials: int, seed: int, dt: float,
                   V: int | None = None, workers: int | None = None) -> np.ndarray:
    """Lengths ``l_{t,e}`` per trial and circle, shape ``(trials, len(circles))``."""
    V = _circle_V(sigma, V)
    samples = [sigma.circle_samples(e.basis, V) for e in circles]
    x0 = np.concatenate([s[1] for s in samples])
    v0 = np.concatenate([s[2] for s in samples])
    n = brownian.n_steps_for(t, dt) if t > 0 else 0
    if n == 0:
        norms = sigma.manifold.norm(x0, v0)
        return np.broadcast_to(_lengths_from_norms(norms, V), (trials, len(circles))).copy()
    out = []
    for block in iter_ensemble(spec, x0, dt, n, seed, trials, record_steps=[n], v0=v0,
                               keep_positions=False, keep_tangents=False, workers=workers):
        out.append(_lengths_from_norms(block.tangent_norms[:, 0], V))
    return np.concatenate(out)


@dataclass(frozen=True)
class LengthStatistics:
    sup_of_means: float
    mean_of_sups: float
    mean_per_circle: np.ndarray = field(repr=False)


def length_statistics(lengths: np.ndarray) -> LengthStatistics:
    """``sup_e E l_{t,e}`` versus ``E sup_e l_{t,e}``; the second dominates the first."""
    means = lengths.mean(axis=0)
    return LengthStatistics(float(means.max()), float(lengths.max(axis=1).mean()), means)


# -- moment integral ---------------------------------------------------------------

@dataclass
class MomentIntegralReport:
    t_grid: np.ndarray
    integrand: np.ndarray
    stderr: np.ndarray
    truncated_integral: float
    tail_slope: float
    extrapolated_tail: float
    growth_slope: float
    converged: bool
    description: str = ""

    def to_dict(self):
        d = asdict(self)
        for k in ("t_grid", "integrand", "stderr"):
            d[k] = [float(x) for x in d[k]]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=True)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "integrand"])
            for t, y in zip(self.t_grid, self.integrand):
                w.writerow([repr(float(t)), repr(float(y))])


def summarize_integrand(t_grid, integrand, stderr, description="") -> MomentIntegralReport:
    t_grid = np.asarray(t_grid, dtype=float)
    integrand = np.asarray(integrand, dtype=float)
    total = float(trapezoid(integrand, t_grid))
    q = max(2, len(t_grid) // 4)
    tail_t = t_grid[-q:]
    tail_y = integrand[-q:]
    if np.all(tail_y > 0):
        slope = float(np.polyfit(tail_t, np.log(tail_y), 1)[0])
    else:
        slope = -math.inf
    extrapolated = float(tail_y[-1] / -slope) if slope < 0 else math.inf
    cumulative = cumulative_trapezoid(integrand, t_grid, initial=0.0)
    growth = float(np.polyfit(tail_t, cumulative[-q:], 1)[0])
    converged = bool(slope < 0 and extrapolated < 0.05 * total)
    return MomentIntegralReport(t_grid, integrand, np.asarray(stderr, dtype=float), total, slope,
                                extrapolated, growth, converged, description)


def moment_integral_estimate(spec: VectorFieldSpec, L: CompactTangentSet, T_max: float, dt: float,
                             trials: int, seed: int, n_grid: int = 200,
                             workers: int | None = None) -> MomentIntegralReport:
    """Monte Carlo ``t -> sup_{(x, v) in L} E |T_x xi_t v|`` and its truncated integral."""
    if T_max < 10 * dt * (1 - 1e-9):
        raise ValueError("T_max must be at least 10 dt")
    n = brownian.n_steps_for(T_max, dt)
    steps = np.unique(np.round(np.linspace(0, n, n_grid + 1)).astype(int))
    total = np.zeros((len(steps), len(L.bases)))
    total_sq = np.zeros_like(total)
    count = 0
    for block in iter_ensemble(spec, L.bases, dt, n, seed, trials, record_steps=steps, v0=L.vectors,
                               keep_positions=False, keep_tangents=False, workers=workers):
        norms = block.tangent_norms
        total += norms.sum(axis=0)
        total_sq += (norms * norms).sum(axis=0)
        count += norms.shape[0]
    means = total / count
    var = np.maximum(total_sq - count * means**2, 0.0) / max(count - 1, 1)
    se = np.sqrt(var / count)
    if steps[0] == 0:
        # T xi_0 is the identity: no averaging round-off at t = 0
        means[0] = L.norms(spec.manifold)
        se[0] = 0.0
    best = np.argmax(means, axis=1)
    rows = np.arange(len(steps))
    return summarize_integrand(steps * dt, means[rows, best], se[rows, best], L.description)


# -- diameters ------------------------------------------------------------------------

def diameter_series(sigma: SphereMapDiscretization, spec: VectorFieldSpec, t_grid, trials: int,
                    seed: int, dt: float, workers: int | None = None):
    """Per-trial diameters of ``sigma_t`` at each time, shape ``(trials, len(t_grid))``."""
    t_grid = np.asarray(t_grid, dtype=float)
    steps = np.floor(t_grid / dt + 1e-9).astype(int)
    n = int(steps.max())
    M = sigma.manifold
    if n == 0:
        return np.full((trials, len(t_grid)), M.diameter(sigma.image))
    out = []
    for block in iter_ensemble(spec, sigma.image, dt, n, seed, trials, record_steps=steps, workers=workers):
        out.append(M.diameter(block.positions))
    return np.concatenate(out)


def expected_diameter(sigma, spec, t: float, trials: int, seed: int, dt: float, workers=None):
    """Monte Carlo ``E diam(sigma_t)`` with its standard error."""
    d = diameter_series(sigma, spec, [t], trials, seed, dt, workers)[:, 0]
    se = float(d.std(ddof=1) / math.sqrt(len(d))) if len(d) > 1 else 0.0
    return float(d.mean()), se


def find_shrinking_times(sigma, spec, t_grid, trials: int, threshold: float, seed: int, dt: float,
                         workers=None) -> list[float]:
    """Grid times where ``mean + 2 stderr`` of the diameter is below ``threshold``."""
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be increasing")
    d = diameter_series(sigma, spec, t_grid, trials, seed, dt, workers)
    mean = d.mean(axis=0)
    se = d.std(axis=0, ddof=1) / math.sqrt(d.shape[0]) if d.shape[0] > 1 else np.zeros_like(mean)
    return [float(t) for t, m, s in zip(t_grid, mean, se) if m + 2 * s < threshold]
