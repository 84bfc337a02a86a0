"""Geodesic-interpolation homotopies between pushed sphere maps.

Between two discretized maps whose corresponding vertices are closer than the
injectivity radius, sliding every vertex along its unique short geodesic is a
homotopy.  Chaining such homotopies over steps of length ``delta`` connects
``sigma`` to ``xi_t o sigma`` for any ``t``.  Small images are certified
null-homotopic by exhibiting a geodesic ball that contains them, and on flat
tori the winding number gives an independent homotopy invariant.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import BeyondInjectivityRadius, ResolutionTooCoarse
from .flow import FlowRealization
from .manifolds import FlatTorus, Manifold
from .spheremaps import SphereMapDiscretization


@dataclass(frozen=True)
class Homotopy:
    """Grid ``(vertex, s-index) -> point`` with ``s = j / S``."""

    grid: np.ndarray = field(repr=False)  # (V, S + 1, D)
    t: float = 0.0
    trial: int = 0
    step: int = 0

    @property
    def S(self) -> int:
        return self.grid.shape[1] - 1

    def start(self):
        return self.grid[:, 0]

    def end(self):
        return self.grid[:, -1]


@dataclass(frozen=True)
class BallWitness:
    center: np.ndarray
    radius: float


@dataclass
class ChainResult:
    """Outcome of :func:`stepwise_homotopy_chain`; a broken chain is data, not an error."""

    times: list[float]
    homotopies: list[Homotopy]
    ok: bool
    broken_step: int | None = None
    broken_vertex: int | None = None


def push_map(sigma: SphereMapDiscretization, R: FlowRealization, t: float) -> SphereMapDiscretization:
    """``xi_{t, omega} o sigma`` on the same mesh; every vertex sees the same noise."""
    return sigma.with_image(R.evaluate(sigma.image, t).points)


def geodesic_homotopy(start: SphereMapDiscretization, end: SphereMapDiscretization, S: int,
                      r_inj: float | None = None, t: float = 0.0, trial: int = 0, step: int = 0) -> Homotopy:
    """Slide each vertex of ``start`` to its counterpart in ``end`` along the short geodesic.

    Raises :class:`BeyondInjectivityRadius` (``.index`` = vertex) if some
    displacement is not below ``r_inj`` and :class:`ResolutionTooCoarse` if
    neighbouring grid points end up 0.9 ``r_inj`` or more apart.
    """
    if start.V != end.V:
        raise ValueError("homotopy endpoints must share a domain mesh")
    M = start.manifold
    if r_inj is None:
        r_inj = min(M.injectivity_radius_set(start.image), M.injectivity_radius_set(end.image))
    a = start.image
    b = end.image
    disp = M.dist(a, b)
    bad = np.flatnonzero(disp >= r_inj)
    if bad.size:
        raise BeyondInjectivityRadius(f"vertex {bad[0]} moves {disp[bad[0]]:.4g} >= R_inj {r_inj:.4g}",
                                      index=int(bad[0]))
    v = M.log(a, b, check=False)
    s = np.arange(S + 1) / S
    grid = M.exp(a[:, None, :], s[None, :, None] * v[:, None, :])
    grid[:, 0] = a
    grid[:, -1] = b
    limit = 0.9 * r_inj
    if S > 0 and np.max(disp) / S >= limit:
        raise ResolutionTooCoarse("homotopy parameter grid is too coarse")
    e = start.edges()
    if np.max(M.dist(grid[e[:, 0]], grid[e[:, 1]])) >= limit:
        raise ResolutionTooCoarse("neighbouring vertices exceed 0.9 R_inj inside the homotopy")
    return Homotopy(grid, t=t, trial=trial, step=step)


def chain_times(t: float, delta: float) -> list[float]:
    """``0, delta, ..., n delta, t`` with ``n delta <= t < (n + 1) delta``."""
    if t <= 0:
        return [0.0]
    n = int(math.floor(t / delta + 1e-9))
    times = [k * delta for k in range(n + 1)]
    if t - times[-1] > 1e-12 * max(1.0, t):
        times.append(t)
    return times


def stepwise_homotopy_chain(sigma: SphereMapDiscretization, R: FlowRealization, t: float, delta: float,
                            S: int = 4, r_inj: float | None = None) -> ChainResult:
    """Homotopies between the pushed maps at consecutive chain times.

    Consecutive homotopies share their boundary grids bitwise.
    """
    if delta < 10 * R.dt * (1 - 1e-9):
        raise ValueError("delta must be at least 10 dt")
    times = chain_times(t, delta)
    if len(times) == 1:
        return ChainResult(times, [], True)
    M = sigma.manifold
    if r_inj is None:
        r_inj = M.injectivity_radius_set(sigma.image)
    steps = [R.steps_for(s) for s in times]
    traj = R.trajectory(sigma.image, steps[-1] * R.dt)
    maps = [sigma if k == 0 else sigma.with_image(traj[n]) for k, n in enumerate(steps)]
    homotopies = []
    for k in range(len(maps) - 1):
        try:
            h = geodesic_homotopy(maps[k], maps[k + 1], S, r_inj=r_inj, t=times[k + 1],
                                  trial=R.path.trial_index, step=k)
        except BeyondInjectivityRadius as exc:
            return ChainResult(times, homotopies, False, broken_step=k, broken_vertex=exc.index)
        except ResolutionTooCoarse:
            return ChainResult(times, homotopies, False, broken_step=k, broken_vertex=None)
        homotopies.append(h)
    return ChainResult(times, homotopies, True)


def chain_displacements_ok(M: Manifold, images: np.ndarray, r_inj: float):
    """Vectorized chain test on pushed images ``(B, n_times, V, D)``.

    Returns ``(ok, first_broken_step)`` per trial (-1 when unbroken).
    """
    disp = M.dist(images[:, :-1], images[:, 1:])
    bad = np.any(disp >= r_inj, axis=-1)
    ok = ~np.any(bad, axis=-1)
    first = np.where(ok, -1, np.argmax(bad, axis=-1))
    return ok, first


def _witness_from_distances(dists: np.ndarray, r_inj: float):
    diam = dists.max(axis=(-2, -1))
    row_max = dists.max(axis=-1)
    center = np.argmin(row_max, axis=-1)
    radius = np.take_along_axis(row_max, center[..., None], axis=-1)[..., 0]
    found = diam < 0.5 * r_inj
    return found, center, radius, diam


def null_homotopy_witness(sigma_t: SphereMapDiscretization, K) -> BallWitness | None:
    """A geodesic ball of radius < R_inj(K) containing the image, if the image is that small."""
    M = sigma_t.manifold
    r_inj = M.injectivity_radius_set(K)
    found, center, radius, _ = _witness_from_distances(M.pairwise_dist(sigma_t.image), r_inj)
    if not found:
        return None
    return BallWitness(sigma_t.image[int(center)].copy(), float(radius))


def witness_batch(M: Manifold, images: np.ndarray, r_inj: float):
    """Vectorized witnesses for images ``(B, V, D)``: ``(found, center_index, radius, diameter)``."""
    return _witness_from_distances(M.pairwise_dist(images), r_inj)


def winding_number(sigma: SphereMapDiscretization) -> np.ndarray:
    """Integer lattice class of a closed loop on a flat torus."""
    if sigma.n != 1 or not isinstance(sigma.manifold, FlatTorus):
        raise ValueError("winding numbers are defined for loops on flat tori")
    return winding_batch(sigma.manifold, sigma.image[None])[0]


def winding_batch(T: FlatTorus, images: np.ndarray) -> np.ndarray:
    """Winding vectors for loops ``(B, V, d)``."""
    nxt = np.roll(images, -1, axis=-2)
    lifts, lengths = T._shortest(nxt - images)
    if np.any(lengths >= T.injectivity_radius()):
        raise ResolutionTooCoarse("a loop edge reaches the injectivity radius; the lift is ambiguous")
    total = T.to_lattice(lifts.sum(axis=-2))
    w = np.round(total)
    if np.max(np.abs(total - w)) > 1e-6:
        raise ResolutionTooCoarse("edge lifts do not close up on the lattice")
    return w.astype(np.int64)


def export_homotopies_csv(path, homotopies: Iterable[Homotopy]) -> None:
    """Columns: trial, step, vertex, s_index, x0..x{D-1}."""
    rows = list(homotopies)
    D = rows[0].grid.shape[-1] if rows else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "step", "vertex", "s_index"] + [f"x{k}" for k in range(D)])
        for h in rows:
            V, S1, _ = h.grid.shape
            for i in range(V):
                for j in range(S1):
                    w.writerow([h.trial, h.step, i, j] + [repr(float(c)) for c in h.grid[i, j]])
