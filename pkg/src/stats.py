from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class Estimate:
    """binomial proportion with its confidence interval"""
    value: float
    ci_lo: float
    ci_hi: float
    successes: int = 0
    trials: int = 0

    @property
    def sigma(self) -> float:
        if self.trials == 0:
            return 0.0
        return float(np.sqrt(max(self.value * (1.0 - self.value), 0.0) / self.trials))

    def contains(self, target: float, slack: float = 0.0) -> bool:
        return self.ci_lo - slack <= target <= self.ci_hi + slack

    def to_row(self):
        return {
            "estimate": self.value,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "successes": self.successes,
            "trials": self.trials,
        }


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> Estimate:
    if trials <= 0:
        return Estimate(float("nan"), 0.0, 1.0, 0, 0)
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(
        confidence_level=confidence, method="wilson"
    )
    return Estimate(successes / trials, float(ci.low), float(ci.high), int(successes), int(trials))


def spawn_rngs(seed: int, count: int) -> List[np.random.Generator]:
    """
    independent generators for work units 0..count-1. Unit k gets the same
    stream whatever count is, so chunking never changes results.
    """
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.default_rng(child) for child in children]


def inverse_log_limit(eps: Sequence[float], values: Sequence[float], r0: float = 1.0) -> Tuple[float, float]:
    """
    least squares fit of values ~ a + b / log(r0 / eps).

    :param eps: decreasing positive radii, all below r0
    :param values: one value per radius
    :param r0: probe radius
    :return: (a, b); a is the eps -> 0 limit
    """
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    if eps.size < 3 or eps.size != values.size:
        raise ValueError("inverse log fit needs at least three matched points")
    if np.any(eps <= 0) or np.any(eps >= r0):
        raise ValueError("radii must lie in (0, r0)")
    x = 1.0 / np.log(r0 / eps)
    b, a = np.polyfit(x, values, 1)
    return float(a), float(b)
