"""Counter-based Brownian increments.

Each trial owns a Philox-4x64 stream keyed by ``(seed, trial_index)``.  The
increment of noise coordinate ``k`` at step ``n`` consumes exactly raw word
``n * m + k`` of that stream (one 64-bit word -> one uniform -> one normal via
the inverse CDF), so any increment can be regenerated in isolation and the
values never depend on how trials are scheduled across workers.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1
_draws = 0
_draws_lock = threading.Lock()


def draw_count() -> int:
    """Number of increment matrices generated so far (instrumentation)."""
    return _draws


def _count():
    global _draws
    with _draws_lock:
        _draws += 1


def standard_normals(seed: int, trial_index: int, count: int, start: int = 0) -> np.ndarray:
    """Normals at stream positions ``start .. start + count - 1``."""
    key = np.array([seed & _MASK64, trial_index & _MASK64], dtype=np.uint64)
    bitgen = np.random.Philox(key=key)
    block, offset = divmod(start, 4)
    if block:
        bitgen.advance(block)
    raw = bitgen.random_raw(count + offset)[offset:]
    # 53-bit midpoint uniforms lie strictly inside (0, 1)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


def n_steps_for(horizon: float, dt: float) -> int:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if horizon < dt * (1 - 1e-12):
        raise ValueError("horizon must be at least one time step")
    return int(math.ceil(horizon / dt - 1e-9))


def increments(seed: int, trial_index: int, n_steps: int, m: int, dt: float) -> np.ndarray:
    _count()
    return math.sqrt(dt) * standard_normals(seed, trial_index, n_steps * m).reshape(n_steps, m)


def increment_block(seed: int, trials, n_steps: int, m: int, dt: float) -> np.ndarray:
    """Stacked increments, shape ``(len(trials), n_steps, m)``."""
    trials = list(trials)
    out = np.empty((len(trials), n_steps, m))
    for row, trial in enumerate(trials):
        out[row] = increments(seed, int(trial), n_steps, m, dt)
    return out


@dataclass(frozen=True)
class BrownianPath:
    """One realization ``omega`` of m-dimensional Brownian motion on a grid."""

    m: int
    dt: float
    n_steps: int
    seed: int
    trial_index: int
    # set only for derived paths (e.g. coarsened); otherwise regenerated from the key
    explicit: np.ndarray | None = field(default=None, repr=False, compare=False)

    @cached_property
    def increments(self) -> np.ndarray:
        if self.explicit is not None:
            arr = np.array(self.explicit, dtype=float)
        else:
            arr = increments(self.seed, self.trial_index, self.n_steps, self.m, self.dt)
        arr.flags.writeable = False
        return arr

    def coarsen(self, factor: int) -> "BrownianPath":
        """Same Brownian motion observed on a grid ``factor`` times coarser."""
        n = self.n_steps // factor
        summed = self.increments[: n * factor].reshape(n, factor, self.m).sum(axis=1)
        return BrownianPath(self.m, self.dt * factor, n, self.seed, self.trial_index, explicit=summed)

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    def values(self) -> np.ndarray:
        """``B`` at grid times ``0, dt, ..., n_steps * dt``, shape ``(n_steps + 1, m)``."""
        return np.vstack([np.zeros((1, self.m)), np.cumsum(self.increments, axis=0)])


def sample_brownian_path(m: int, horizon: float, dt: float, seed: int, trial_index: int) -> BrownianPath:
    return BrownianPath(m=int(m), dt=float(dt), n_steps=n_steps_for(horizon, dt),
                        seed=int(seed), trial_index=int(trial_index))
