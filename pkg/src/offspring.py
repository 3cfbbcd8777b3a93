from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.special import binom

from errors import InvalidLaw
from logger import get_logger
from model import Coefficient, Constant

logger = get_logger(__name__)

TAIL_MASS = 1e-10
TABLE_CAP = 2 ** 22
GF_LAMBDAS = (0.5, 1.0, 2.0)


@lru_cache(maxsize=8)
def tail_table(p: float) -> np.ndarray:
    """
    cumulative law of the offspring count given k >= 2, proportional to
    |binom(p, k)|; truncated where the mass reaches 1 - 1e-10 (or at 2^22
    entries) with the remainder folded into the last entry. Entry i is k = i + 2.
    """
    if p == 2.0:
        return np.ones(1)
    k = np.arange(2, TABLE_CAP + 2, dtype=float)
    weights = np.abs(binom(p, k)) / (p - 1.0)
    cdf = np.cumsum(weights)
    last = int(np.searchsorted(cdf, 1.0 - TAIL_MASS))
    cdf = cdf[:min(last + 1, cdf.size)]
    cdf[-1] = 1.0
    logger.debug(f"offspring tail table for p={p}: {cdf.size} entries")
    return cdf


@dataclass(frozen=True, eq=False)
class OffspringLaw:
    """
    offspring law with generating function s + [alpha (1-s)^p - beta n^(1-p) (1-s)] / c
    and branching clock rate c n^(p-1) per particle. p = 2 gives the law on {0, 1, 2}.
    """
    p: float
    n: int
    alpha: Coefficient
    beta: Coefficient
    c: float
    branching: bool = True

    @property
    def rate(self) -> float:
        if not self.branching:
            return 0.0
        return self.c * float(self.n) ** (self.p - 1.0)

    def weights(self, r) -> np.ndarray:
        """
        :param r: radii of the branching particles
        :return: rows (p0, p1, mass on k >= 2)
        """
        r = np.asarray(r, dtype=float)
        a = np.broadcast_to(np.asarray(self.alpha(r), dtype=float), r.shape)
        b = np.broadcast_to(np.asarray(self.beta(r), dtype=float), r.shape)
        shift = b * float(self.n) ** (1.0 - self.p)
        p0 = (a - shift) / self.c
        p1 = 1.0 - (self.p * a - shift) / self.c
        tail = a * (self.p - 1.0) / self.c
        return np.vstack([p0, p1, tail])

    def check(self, r) -> None:
        w = self.weights(r)
        if np.any(~np.isfinite(w)) or np.any(w < -1e-15):
            worst = int(np.argmin(np.nan_to_num(w.min(axis=0), nan=-np.inf)))
            raise InvalidLaw(f"negative offspring weight at r={np.ravel(r)[worst]:.4g}; raise n or c")

    def mean(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return 1.0 + np.asarray(self.beta(r), dtype=float) * float(self.n) ** (1.0 - self.p) / self.c

    def pgf(self, s, r) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        a = np.asarray(self.alpha(r), dtype=float)
        b = np.asarray(self.beta(r), dtype=float)
        return s + (a * np.power(1.0 - s, self.p) - b * float(self.n) ** (1.0 - self.p) * (1.0 - s)) / self.c

    def probabilities(self, kmax: int, r: float = 0.0) -> np.ndarray:
        """p_0 .. p_kmax at one location, from the binomial series"""
        p0, p1, _ = self.weights(np.array([r]))[:, 0]
        a = float(np.asarray(self.alpha(np.array([r])))[0])
        k = np.arange(2, kmax + 1, dtype=float)
        tail = a / self.c * np.abs(binom(self.p, k))
        return np.concatenate([[p0, p1], tail])

    def generating_function_gap(self, r: float = 0.0, lambdas: Sequence[float] = GF_LAMBDAS) -> float:
        """
        largest |c n^p (Phi(1 - lambda/n) - (1 - lambda/n)) - (alpha lambda^p - beta lambda)|
        over the lambda values at one location
        """
        n = float(self.n)
        lam = np.asarray(lambdas, dtype=float)
        s = 1.0 - lam / n
        a = float(np.asarray(self.alpha(np.array([r])))[0])
        b = float(np.asarray(self.beta(np.array([r])))[0])
        lhs = self.c * n ** self.p * (self.pgf(s, np.full(lam.shape, r)) - s)
        return float(np.max(np.abs(lhs - (a * lam ** self.p - b * lam))))

    def sample(self, r, rng: np.random.Generator) -> np.ndarray:
        """offspring counts for particles branching at radii r"""
        r = np.asarray(r, dtype=float)
        if r.size == 0:
            return np.zeros(0, dtype=np.int64)
        if not self.branching:
            return np.ones(r.size, dtype=np.int64)
        self.check(r)
        p0, p1, _ = self.weights(r)
        u = rng.random(r.size)
        counts = np.where(u < p0, 0, 1).astype(np.int64)
        big = u >= p0 + p1
        if np.any(big):
            table = tail_table(self.p)
            counts[big] = 2 + np.searchsorted(table, rng.random(int(big.sum())), side="right")
            np.minimum(counts, table.size + 1, out=counts)
        return counts


def default_rate_constant(p: float, alpha_sup: float, beta_inf: float) -> float:
    """smallest c keeping p1 >= 0 at every n >= 1"""
    return p * alpha_sup + max(0.0, -beta_inf)


def build_offspring_law(
    p: float,
    n: int,
    alpha: Coefficient,
    beta: Coefficient,
    c: Optional[float] = None,
    probe_radii: Optional[np.ndarray] = None,
) -> OffspringLaw:
    """
    :param p: branching power in (1, 2]
    :param n: particles per unit mass
    :param alpha: absorption coefficient
    :param beta: creation coefficient
    :param c: rate constant, at least p sup alpha
    :param probe_radii: radii where the weights are checked, defaults to [0, 1e3]
    :return: the law, with weights validated at the probe radii
    """
    if not 1 < p <= 2:
        raise InvalidLaw(f"no branching law for p={p}")
    if n < 1:
        raise InvalidLaw("n must be a positive integer")
    r = np.linspace(0.0, 1e3, 2001) if probe_radii is None else np.asarray(probe_radii, dtype=float)
    if c is None:
        with np.errstate(all='ignore'):
            a = np.asarray(alpha(r), dtype=float)
            b = np.asarray(beta(r), dtype=float)
        c = default_rate_constant(p, float(np.nanmax(a)), float(np.nanmin(b)))
    if not c > 0 or not np.isfinite(c):
        raise InvalidLaw(f"rate constant must be positive and finite, got {c}")
    law = OffspringLaw(p=float(p), n=int(n), alpha=alpha, beta=beta, c=float(c))
    law.check(r)
    return law


def no_branching_law(n: int) -> OffspringLaw:
    """every particle keeps exactly one copy of itself; the population only moves"""
    return OffspringLaw(p=2.0, n=int(n), alpha=Constant(0.5), beta=Constant(0.0), c=1.0, branching=False)
