"""Binomial proportion estimates with Wilson score intervals."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import binomtest


@dataclass(frozen=True)
class ProbabilityEstimate:
    successes: int
    trials: int
    estimate: float
    ci_low: float
    ci_high: float

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)

    def to_dict(self):
        return asdict(self)


def wilson(successes: int, trials: int, confidence: float = 0.95) -> ProbabilityEstimate:
    successes = int(successes)
    trials = int(trials)
    if trials <= 0:
        raise ValueError("need at least one trial")
    ci = binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return ProbabilityEstimate(successes, trials, successes / trials, float(ci.low), float(ci.high))


def mean_and_stderr(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    n = values.size
    mean = float(values.mean())
    if n < 2:
        return mean, 0.0
    return mean, float(values.std(ddof=1) / np.sqrt(n))
