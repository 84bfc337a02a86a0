"""Stratonovich Heun integration of flow SDEs and their derivative flows.

The integrator works on arrays shaped ``(trials, points, ambient_dim)``; every
point of a trial is driven by the same increments, which is what makes the
result a flow of maps rather than a bag of independent trajectories.

The tangent (variational) equation is advanced by the same Heun scheme,
jointly with the base trajectory, and then pushed through the derivative of
the projection.  The result is the exact derivative of the discrete step, so
finite differences of :func:`flow_map` agree with :func:`tangent_flow` to
``O(eps)``.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import brownian
from .brownian import BrownianPath
from .errors import HorizonExceeded
from .fields import VectorFieldSpec
from .regions import Region
from .stats import ProbabilityEstimate, wilson

log = logging.getLogger(__name__)

BLOCK_SIZE = 256


def worker_count() -> int:
    env = os.environ.get("FLOWTOP_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _frame_apply(frame, dB):
    # explicit sum over noise coordinates keeps the arithmetic order fixed
    out = frame[..., 0] * dB[..., None, 0]
    for k in range(1, frame.shape[-1]):
        out = out + frame[..., k] * dB[..., None, k]
    return out


def heun_step(spec: VectorFieldSpec, x, dB, dt: float, v=None):
    """One predictor-corrector step followed by projection onto the manifold.

    ``dB`` has shape ``(..., m)`` broadcasting against ``x.shape[:-1]``.
    Returns ``(x_next, v_next)``; ``v_next`` is ``None`` when ``v`` is.
    """
    a0 = spec.drift(x)
    b0 = spec.diffusion(x)
    xp = x + a0 * dt + _frame_apply(b0, dB)
    a1 = spec.drift(xp)
    b1 = spec.diffusion(xp)
    y = x + 0.5 * (a0 + a1) * dt + 0.5 * _frame_apply(b0 + b1, dB)
    w = None
    if v is not None:
        da0 = spec.drift_jvp(x, v)
        db0 = spec.diffusion_jvp(x, v)
        vp = v + da0 * dt + _frame_apply(db0, dB)
        da1 = spec.drift_jvp(xp, vp)
        db1 = spec.diffusion_jvp(xp, vp)
        w = v + 0.5 * (da0 + da1) * dt + 0.5 * _frame_apply(db0 + db1, dB)
    return spec.manifold.project_jvp(y, w)


@dataclass
class Trajectory:
    """States recorded at selected grid steps for one block of trials."""

    trials: np.ndarray
    record_steps: np.ndarray
    positions: np.ndarray | None  # (B, R, P, D)
    tangents: np.ndarray | None  # (B, R, P, D)
    tangent_norms: np.ndarray | None  # (B, R, P)
    exit_steps: np.ndarray | None  # (B, P); -1 when the point never left W


def integrate(spec: VectorFieldSpec, x0, dB, dt: float, record_steps: Sequence[int] = (),
              v0=None, exit_region: Region | None = None, keep_positions: bool = True,
              keep_tangents: bool = True):
    """Run the scheme over the increments ``dB`` of shape ``(B, n, m)``.

    ``x0``/``v0`` broadcast to ``(B, P, D)``.  Returns a dict with the
    recorded arrays and the final state.
    """
    M = spec.manifold
    dB = np.asarray(dB, dtype=float)
    B, n = dB.shape[:2]
    x = np.array(np.broadcast_to(np.asarray(x0, dtype=float), (B,) + np.shape(x0)[-2:]))
    v = None if v0 is None else np.array(np.broadcast_to(np.asarray(v0, dtype=float), x.shape))
    record_steps = np.asarray(record_steps, dtype=int)
    R = len(record_steps)
    if R and (record_steps.min() < 0 or record_steps.max() > n):
        raise HorizonExceeded(f"record step {record_steps.max()} beyond {n} integrated steps")
    pos = np.empty((B, R) + x.shape[1:]) if keep_positions else None
    tan = np.empty((B, R) + x.shape[1:]) if (v is not None and keep_tangents) else None
    tnorm = np.empty((B, R) + x.shape[1:-1]) if v is not None else None
    exits = None
    if exit_region is not None:
        exits = np.where(exit_region.contains(M, x), -1, 0)
    slots = {}
    for r, step in enumerate(record_steps):
        slots.setdefault(int(step), []).append(r)

    def record(step):
        for r in slots.get(step, ()):
            if pos is not None:
                pos[:, r] = x
            if v is not None:
                if tan is not None:
                    tan[:, r] = v
                tnorm[:, r] = M.norm(x, v)

    record(0)
    for step in range(n):
        x, v = heun_step(spec, x, dB[:, step, None, :], dt, v)
        if exits is not None:
            fresh = (exits < 0) & ~exit_region.contains(M, x)
            exits[fresh] = step + 1
        record(step + 1)
    return {"positions": pos, "tangents": tan, "tangent_norms": tnorm,
            "exit_steps": exits, "x": x, "v": v}


def _blocks(trials: Sequence[int], block_size: int):
    trials = np.asarray(trials, dtype=np.int64)
    for start in range(0, len(trials), block_size):
        yield trials[start:start + block_size]


def iter_ensemble(spec: VectorFieldSpec, x0, dt: float, n_steps: int, seed: int, trials,
                  record_steps: Sequence[int] = (), v0=None, exit_region: Region | None = None,
                  keep_positions: bool = True, keep_tangents: bool = True,
                  block_size: int = BLOCK_SIZE, workers: int | None = None) -> Iterator[Trajectory]:
    """Simulate trials in fixed-size blocks, yielding blocks in trial order.

    The block partition does not depend on ``workers``, so every number that
    comes out is identical for any worker count.
    """
    if isinstance(trials, int):
        trials = range(trials)

    def job(block):
        dB = brownian.increment_block(seed, block, n_steps, spec.m, dt)
        out = integrate(spec, x0, dB, dt, record_steps, v0, exit_region, keep_positions, keep_tangents)
        return Trajectory(block, np.asarray(record_steps, dtype=int), out["positions"],
                          out["tangents"], out["tangent_norms"], out["exit_steps"])

    workers = worker_count() if workers is None else max(1, int(workers))
    blocks = _blocks(trials, block_size)
    if workers == 1:
        yield from map(job, blocks)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(job, blocks)


def simulate(spec, x0, dt, n_steps, seed, trials, record_steps=(), **kw) -> Trajectory:
    """:func:`iter_ensemble` concatenated into a single :class:`Trajectory`."""
    parts = list(iter_ensemble(spec, x0, dt, n_steps, seed, trials, record_steps, **kw))

    def cat(name):
        arrays = [getattr(p, name) for p in parts]
        return None if arrays[0] is None else np.concatenate(arrays)

    return Trajectory(np.concatenate([p.trials for p in parts]), np.asarray(record_steps, dtype=int),
                      cat("positions"), cat("tangents"), cat("tangent_norms"), cat("exit_steps"))


# -- single realizations ----------------------------------------------------

@dataclass(frozen=True)
class FlowResult:
    points: np.ndarray
    tangents: np.ndarray | None
    time_requested: float
    time_used: float
    n_steps: int

    @property
    def snapped(self) -> bool:
        return self.time_used != self.time_requested


def snap_time(t: float, dt: float, n_max: int) -> int:
    if t < 0:
        raise ValueError("time must be non-negative")
    n = int(math.floor(t / dt + 1e-9))
    if n > n_max:
        raise HorizonExceeded(f"t = {t} exceeds the path horizon {n_max * dt}")
    return n


@dataclass(frozen=True)
class FlowRealization:
    """A driving path together with the SDE it drives: one map ``x -> xi_t(x)`` per ``t``."""

    spec: VectorFieldSpec
    path: BrownianPath

    def __post_init__(self):
        if self.path.m != self.spec.m:
            raise ValueError("path noise dimension does not match the vector field")

    @classmethod
    def sample(cls, spec: VectorFieldSpec, horizon: float, dt: float, seed: int, trial_index: int = 0):
        return cls(spec, brownian.sample_brownian_path(spec.m, horizon, dt, seed, trial_index))

    @property
    def dt(self) -> float:
        return self.path.dt

    def steps_for(self, t: float) -> int:
        return snap_time(t, self.path.dt, self.path.n_steps)

    def evaluate(self, x, t: float, v=None, start_step: int = 0) -> FlowResult:
        """Flow ``x`` (shape ``(D,)`` or ``(P, D)``) from grid step ``start_step`` for time ``t``."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = x[None, None] if single else x[None]
        tv = None
        if v is not None:
            v = np.asarray(v, dtype=float)
            tv = v[None, None] if single else v[None]
        n = snap_time(t, self.path.dt, self.path.n_steps - start_step)
        if n * self.path.dt != t:
            log.debug("time %r snapped down to grid time %r", t, n * self.path.dt)
        if n == 0:
            out_x, out_v = pts, tv
        else:
            dB = self.path.increments[None, start_step:start_step + n]
            res = integrate(self.spec, pts, dB, self.path.dt, v0=tv, keep_positions=False)
            out_x, out_v = res["x"], res["v"]
        out_x = out_x[0, 0] if single else out_x[0]
        if out_v is not None:
            out_v = out_v[0, 0] if single else out_v[0]
        return FlowResult(out_x, out_v, float(t), n * self.path.dt, n)

    def trajectory(self, x, t: float) -> np.ndarray:
        """All grid states of ``x`` on ``[0, t]``, shape ``(n + 1, ..., D)``."""
        x = np.asarray(x, dtype=float)
        n = self.steps_for(t)
        pts = x.reshape(1, -1, x.shape[-1])
        res = integrate(self.spec, pts, self.path.increments[None, :n], self.path.dt, record_steps=range(n + 1))
        return res["positions"][0].reshape((n + 1,) + x.shape)


def flow_map(R: FlowRealization, x, t: float):
    """``xi_{t, omega}(x)``; identity at ``t = 0``."""
    return R.evaluate(x, t).points


def tangent_flow(R: FlowRealization, x, v, t: float):
    """Push the tangent vector ``v`` at ``x``; returns ``(base, vector)`` at time ``t``."""
    res = R.evaluate(x, t, v=v)
    return res.points, res.tangents


def compose_check(R: FlowRealization, x, s: float, t: float) -> float:
    """Distance between "flow to s, then continue with the noise of [s, s+t]" and "flow to s+t"."""
    ns = R.steps_for(s)
    nt = snap_time(t, R.dt, R.path.n_steps - ns)
    mid = R.evaluate(x, ns * R.dt).points
    two_stage = R.evaluate(mid, nt * R.dt, start_step=ns).points
    direct = R.evaluate(x, (ns + nt) * R.dt).points
    return float(np.max(R.spec.manifold.dist(two_stage, direct)))


def exit_time(R: FlowRealization, x, W: Region, horizon: float) -> float | None:
    """First grid time the trajectory from ``x`` is outside ``W``; ``None`` if it never leaves."""
    M = R.spec.manifold
    if not np.all(W.contains(M, x)):
        raise ValueError("starting point must lie in W")
    n = R.steps_for(horizon)
    res = integrate(R.spec, np.asarray(x, dtype=float).reshape(1, 1, -1), R.path.increments[None, :n],
                    R.dt, exit_region=W, keep_positions=False)
    step = int(res["exit_steps"][0, 0])
    return None if step < 0 else step * R.dt


# -- Monte Carlo over realizations --------------------------------------------

def first_exit_steps(spec: VectorFieldSpec, K, W: Region, horizon: float, dt: float, trials: int,
                     seed: int, workers: int | None = None) -> np.ndarray:
    """Per trial, the earliest exit step over all sample points of ``K`` (-1: none).

    All points of a trial share that trial's noise.
    """
    M = spec.manifold
    K = np.asarray(K, dtype=float).reshape(-1, M.ambient_dim)
    if not np.all(W.contains(M, K)):
        raise ValueError("K must lie inside W")
    n = brownian.n_steps_for(horizon, dt)
    out = []
    for block in iter_ensemble(spec, K, dt, n, seed, trials, exit_region=W, keep_positions=False,
                               workers=workers):
        steps = block.exit_steps.astype(float)
        steps[steps < 0] = np.inf
        first = steps.min(axis=1)
        out.append(np.where(np.isfinite(first), first, -1).astype(np.int64))
    return np.concatenate(out)


def exit_fraction(first_steps: np.ndarray, delta: float, dt: float) -> ProbabilityEstimate:
    """Estimate ``P(exists x in K: tau_x <= delta)`` from :func:`first_exit_steps` output."""
    limit = int(math.floor(delta / dt + 1e-9))
    hits = int(np.count_nonzero((first_steps >= 0) & (first_steps <= limit)))
    return wilson(hits, len(first_steps))


def exit_probability_estimate(spec: VectorFieldSpec, K, W: Region, delta: float, trials: int, seed: int,
                              dt: float, workers: int | None = None) -> ProbabilityEstimate:
    steps = first_exit_steps(spec, K, W, delta, dt, trials, seed, workers)
    return exit_fraction(steps, delta, dt)


# -- convergence -----------------------------------------------------------------

@dataclass(frozen=True)
class StepDoublingReport:
    dts: np.ndarray
    errors: np.ndarray
    order: float
    constant: float


def step_doubling_order(spec: VectorFieldSpec, x0, t: float, dt_fine: float, levels: int, trials: int,
                        seed: int) -> StepDoublingReport:
    """RMS of ``d(X_h(t), X_{h/2}(t))`` for ``h = 2 dt_fine, ..., 2^levels dt_fine``.

    Coarse increments are sums of the fine ones, so every level sees the same
    Brownian motion.  ``order`` is the least-squares slope of ``log error``
    against ``log h`` and ``constant`` the largest ``error / h``.
    """
    M = spec.manifold
    n = brownian.n_steps_for(t, dt_fine)
    if n % 2**levels:
        raise ValueError("t / dt_fine must be divisible by 2**levels")
    x0 = np.asarray(x0, dtype=float)
    dB = brownian.increment_block(seed, range(trials), n, spec.m, dt_fine)
    finals = []
    for k in range(levels + 1):
        f = 2**k
        coarse = dB.reshape(trials, n // f, f, spec.m).sum(axis=2)
        finals.append(integrate(spec, x0, coarse, dt_fine * f, keep_positions=False)["x"])
    dts = dt_fine * 2.0 ** np.arange(1, levels + 1)
    errors = np.array([math.sqrt(np.mean(M.dist(finals[k], finals[k - 1]) ** 2)) for k in range(1, levels + 1)])
    if np.any(errors <= 1e-15):
        # exact at every resolution (e.g. translations)
        order = math.inf
    else:
        order = float(np.polyfit(np.log(dts), np.log(errors), 1)[0])
    constant = float(np.max(errors / dts))
    log.info("step doubling: order %.3f, C %.3g", order, constant)
    return StepDoublingReport(dts, errors, order, constant)
