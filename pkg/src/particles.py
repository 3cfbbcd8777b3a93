import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from blowup import epsilon_limit
from errors import ConfigError, InvalidLaw, PopulationExplosionCap, StepRateTooLarge
from logger import get_logger
from model import CoefficientSet, ModelConfig, build_coefficients, config_hash
from offspring import OffspringLaw, build_offspring_law, no_branching_law
from solver import mass_ode, solve_semilinear
from grid import clustered_grid
from stats import Estimate, spawn_rngs, wilson_interval
from theory import Outcome

logger = get_logger(__name__)

MAX_RATE_DT = 0.1
QUANTILES = (0.5, 0.9, 0.99)
BOUNDED_AWAY = "BoundedAwayFromZero"
VANISHING = "VanishingWithEps"
UNDECIDED = "Undetermined"
HIT_DENSITY = 4.0


@dataclass
class Population:
    """
    particles of many independent replicas, each of mass 1/n. radius is the
    running max of |Y| per replica (inf once a particle escaped to the cemetery).
    """
    positions: np.ndarray
    replica: np.ndarray
    n: int
    replicas: int
    time: float = 0.0
    radius: Optional[np.ndarray] = None
    closest: Optional[np.ndarray] = None
    target: Optional[np.ndarray] = None
    extinct_at: Optional[np.ndarray] = None
    escape_radius: float = 1e6
    hard_cap: int = 1_000_000

    def __post_init__(self):
        if self.radius is None:
            self.radius = np.zeros(self.replicas)
            np.maximum.at(self.radius, self.replica, self.norms())
        if self.closest is None:
            self.closest = np.full(self.replicas, np.inf)
            self._update_closest()
        if self.extinct_at is None:
            self.extinct_at = np.full(self.replicas, np.nan)

    @classmethod
    def start(cls, n: int, replicas: int, x0: Sequence[float], **kwargs) -> "Population":
        """n particles of every replica at x0, i.e. the unit point mass"""
        x0 = np.asarray(x0, dtype=float)
        positions = np.tile(x0, (n * replicas, 1))
        replica = np.repeat(np.arange(replicas), n)
        return cls(positions=positions, replica=replica, n=n, replicas=replicas, **kwargs)

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.positions, axis=1)

    def counts(self) -> np.ndarray:
        return np.bincount(self.replica, minlength=self.replicas)

    def mass(self) -> np.ndarray:
        return self.counts() / self.n

    def exploded(self) -> np.ndarray:
        return np.isinf(self.radius)

    def functional(self, f: Callable) -> np.ndarray:
        """<f, X_n> per replica for a radial f"""
        values = np.asarray(f(self.norms()), dtype=float)
        return np.bincount(self.replica, weights=values, minlength=self.replicas) / self.n

    def _update_closest(self):
        if self.target is None or self.positions.shape[0] == 0:
            return
        distance = np.linalg.norm(self.positions - self.target, axis=1)
        np.minimum.at(self.closest, self.replica, distance)


def step_population(
    pop: Population,
    dt: float,
    coeffs: CoefficientSet,
    law: OffspringLaw,
    rng: np.random.Generator,
) -> Population:
    """
    one Euler step of dY = sqrt(2 A(|Y|)) dW for every particle, then branching
    with probability 1 - exp(-rate dt); offspring sit at the parent's position.
    """
    if law.rate * dt > MAX_RATE_DT:
        raise StepRateTooLarge(f"rate * dt = {law.rate * dt:.3g} exceeds {MAX_RATE_DT}")
    positions, replica = pop.positions, pop.replica
    radius = pop.radius.copy()
    closest = pop.closest.copy()
    extinct_at = pop.extinct_at.copy()

    if positions.shape[0]:
        r = np.linalg.norm(positions, axis=1)
        sigma = np.sqrt(2.0 * np.asarray(coeffs.A(r), dtype=float) * dt)
        positions = positions + sigma[:, None] * rng.standard_normal(positions.shape)

        r = np.linalg.norm(positions, axis=1)
        escaped = ~(r < pop.escape_radius)
        if np.any(escaped):
            radius[np.unique(replica[escaped])] = np.inf
            positions, replica, r = positions[~escaped], replica[~escaped], r[~escaped]
        np.maximum.at(radius, replica, r)

        branch = rng.random(r.size) < -math.expm1(-law.rate * dt)
        if np.any(branch):
            counts = np.ones(r.size, dtype=np.int64)
            counts[branch] = law.sample(r[branch], rng)
            positions = np.repeat(positions, counts, axis=0)
            replica = np.repeat(replica, counts)

    time = pop.time + dt
    alive = np.bincount(replica, minlength=pop.replicas) > 0
    extinct_at[np.isnan(extinct_at) & ~alive] = time

    new = replace(pop, positions=positions, replica=replica, time=time,
                  radius=radius, closest=closest, extinct_at=extinct_at)
    new._update_closest()
    if positions.shape[0] > pop.hard_cap:
        raise PopulationExplosionCap(f"{positions.shape[0]} particles at t={time:.4g} exceed the cap", partial=new)
    return new


@dataclass
class SimulationResult:
    """per-replica records of one run, in replica order"""
    seed: int
    n: int
    times: np.ndarray
    mass: np.ndarray
    radius: np.ndarray
    extinct_at: np.ndarray
    closest: np.ndarray
    laplace: Optional[np.ndarray] = None
    snapshots: Dict[float, np.ndarray] = field(default_factory=dict)

    @property
    def replicas(self) -> int:
        return self.mass.size

    @property
    def horizon(self) -> float:
        return float(self.times[-1]) if self.times.size else 0.0

    def to_rows(self) -> List[Dict[str, float]]:
        rows = []
        for i in range(self.replicas):
            rows.append({
                "replica": i,
                "seed": self.seed,
                "final_mass": float(self.mass[i]),
                "extinction_time": float(self.extinct_at[i]) if np.isfinite(self.extinct_at[i]) else self.horizon,
                "max_radius": float(self.radius[i]),
                "closest": float(self.closest[i]),
            })
        return rows


def particle_check(config: ModelConfig) -> None:
    if config.p > 2:
        raise InvalidLaw("no branching particle system for p > 2")
    if float(config.d) != int(config.d):
        raise ConfigError("particle systems need an integer dimension")
    if config.motion.line:
        raise ConfigError("particle systems need a radial motion")


def time_step(law: OffspringLaw, T: float, rate_dt: float = 0.05, base: float = 0.01) -> float:
    """largest step dividing T with rate * dt <= rate_dt"""
    if T <= 0:
        return base
    dt = min(base, rate_dt / law.rate) if law.rate > 0 else base
    steps = max(int(math.ceil(T / dt - 1e-9)), 1)
    return T / steps


def _run_chunk(coeffs, law, n, replicas, x0, T, dt, rng, target, laplace_f, snap_times, escape_radius, hard_cap):
    pop = Population.start(n, replicas, x0, target=target, escape_radius=escape_radius, hard_cap=hard_cap)
    steps = int(round(T / dt)) if T > 0 else 0
    pending = sorted(snap_times)
    snapshots = {}
    while pending and pending[0] <= 1e-12:
        snapshots[pending.pop(0)] = pop.radius.copy()
    for k in range(steps):
        pop = step_population(pop, dt, coeffs, law, rng)
        while pending and pending[0] <= pop.time + 1e-9 * dt:
            snapshots[pending.pop(0)] = pop.radius.copy()
        if pop.positions.shape[0] == 0:
            break
    for t in pending:
        snapshots[t] = pop.radius.copy()
    laplace = pop.functional(laplace_f) if laplace_f is not None else None
    return pop, snapshots, laplace


def simulate(
    config: ModelConfig,
    n: int,
    replicas: int,
    T: float,
    seed: int,
    x0: Optional[Sequence[float]] = None,
    target: Optional[Sequence[float]] = None,
    laplace_f: Optional[Callable] = None,
    snap_times: Sequence[float] = (),
    branching: bool = True,
    rate_dt: float = 0.05,
    chunk: int = 50,
    threads: int = 1,
    escape_radius: float = 1e6,
    hard_cap: int = 1_000_000,
    law: Optional[OffspringLaw] = None,
) -> SimulationResult:
    """
    :param config: model with p in (1, 2] and integer d
    :param n: particles per unit mass
    :param replicas: independent runs
    :param T: horizon
    :param seed: root seed; chunk k always draws from child k of the seed sequence
    :param x0: starting point of the unit point mass, the origin by default
    :param target: point whose distance to the particles is tracked
    :param laplace_f: radial f whose functional <f, X_n(T)> is recorded
    :param snap_times: times at which the running max radius is recorded
    :param branching: False keeps one copy of every particle
    :return: per-replica records merged in chunk order
    """
    particle_check(config)
    coeffs = build_coefficients(config)
    d = int(config.d)
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    target = None if target is None else np.asarray(target, dtype=float)
    if law is None:
        law = build_offspring_law(config.p, n, config.alpha, config.beta) if branching else no_branching_law(n)
    dt = time_step(law, T, rate_dt)

    sizes = [min(chunk, replicas - start) for start in range(0, replicas, chunk)]
    rngs = spawn_rngs(seed, len(sizes))
    args = (coeffs, law, n)
    tail = (x0, T, dt)
    extra = (target, laplace_f, tuple(snap_times), escape_radius, hard_cap)

    results = {}
    if threads <= 1:
        for k, size in enumerate(sizes):
            results[k] = _run_chunk(*args, size, *tail, rngs[k], *extra)
    else:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            futures = {executor.submit(_run_chunk, *args, size, *tail, rngs[k], *extra): k
                       for k, size in enumerate(sizes)}
            for future in as_completed(futures):
                results[futures[future]] = future.result()

    ordered = [results[k] for k in range(len(sizes))]
    pops = [item[0] for item in ordered]
    snapshots = {t: np.concatenate([item[1][t] for item in ordered]) for t in snap_times}
    laplace = np.concatenate([item[2] for item in ordered]) if laplace_f is not None else None
    result = SimulationResult(
        seed=seed,
        n=n,
        times=np.array([0.0, T]),
        mass=np.concatenate([pop.mass() for pop in pops]),
        radius=np.concatenate([pop.radius for pop in pops]),
        extinct_at=np.concatenate([pop.extinct_at for pop in pops]),
        closest=np.concatenate([pop.closest for pop in pops]),
        laplace=laplace,
        snapshots=snapshots,
    )
    logger.info(f"simulated {replicas} replicas of {config_hash(config)} with n={n}, dt={dt:.3g}")
    return result


# --- estimators -----------------------------------------------------------------

def extinction_oracle(config: ModelConfig, n: Optional[int], t: float, mass: float = 1.0) -> float:
    """
    P(X(t) = 0) for constant alpha, beta: exp(-mass w(t)) with w from infinity,
    or (1 - w_n(t)/n)^(n mass) for the n-particle system, w_n started at n
    """
    alpha = float(np.asarray(config.alpha(np.zeros(1)))[0])
    beta = float(np.asarray(config.beta(np.zeros(1)))[0])
    if t <= 0:
        return 0.0
    if n is None:
        return math.exp(-mass * mass_ode(alpha, beta, config.p, math.inf, t))
    w = mass_ode(alpha, beta, config.p, float(n), t)
    return max(1.0 - w / n, 0.0) ** (n * mass)


def estimate_extinction(config: ModelConfig, n: int, replicas: int, t: float, seed: int, **kwargs) -> Estimate:
    if t <= 0:
        return wilson_interval(0, replicas)
    result = simulate(config, n, replicas, t, seed, **kwargs)
    extinct = (result.mass == 0) & np.isfinite(result.radius)
    return wilson_interval(int(np.sum(extinct)), replicas)


def estimate_csp_probability(config: ModelConfig, n: int, replicas: int, m: float, t: float, seed: int,
                             **kwargs) -> Estimate:
    """fraction of replicas whose running max radius stayed within m up to t"""
    if t <= 0:
        return wilson_interval(replicas, replicas)
    result = simulate(config, n, replicas, t, seed, **kwargs)
    return wilson_interval(int(np.sum(result.radius <= m)), replicas)


@dataclass
class HittingEstimate:
    eps: List[float]
    estimates: List[Estimate]
    trend: str
    note: str = ""
    n: int = 0

    def to_rows(self) -> List[Dict[str, float]]:
        return [dict(eps=e, n=self.n, trend=self.trend, **est.to_row()) for e, est in zip(self.eps, self.estimates)]


def hitting_trend(eps: Sequence[float], estimates: Sequence[Estimate], distance: float) -> Tuple[str, str]:
    """
    the log-weight fit of the PDE classifier applied to -log(1 - p(eps))
    """
    values = [-math.log(max(1.0 - est.value, 1e-300)) for est in estimates]
    verdict = epsilon_limit(eps, values, distance, "hitting")
    trend = {Outcome.FAILS: BOUNDED_AWAY, Outcome.HOLDS: VANISHING}.get(verdict.value, UNDECIDED)
    return trend, verdict.note


def estimate_hitting(
    config: ModelConfig,
    target: Sequence[float],
    eps_ladder: Sequence[float],
    n: int,
    replicas: int,
    seed: int,
    t: Optional[float] = None,
    x0: Optional[Sequence[float]] = None,
    **kwargs,
) -> HittingEstimate:
    """
    :param target: point to be hit; must differ from the starting point
    :param eps_ladder: at least three radii, all below the start-target distance
    :param n: particle count, raised to at least HIT_DENSITY / eps_min^2
    :return: hit fraction per eps with the trend over the ladder
    """
    if config.d < 2:
        raise ConfigError("hitting needs d >= 2")
    d = int(config.d)
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    target = np.asarray(target, dtype=float)
    distance = float(np.linalg.norm(x0 - target))
    if distance == 0:
        raise ConfigError("target must differ from the starting point")
    eps = sorted((float(e) for e in eps_ladder), reverse=True)
    t = config.horizon if t is None else t
    n = max(int(n), math.ceil(HIT_DENSITY / eps[-1] ** 2))
    logger.info(f"hitting ladder {eps} with n={n}")

    result = simulate(config, n, replicas, t, seed, x0=x0, target=target, **kwargs)
    estimates = [wilson_interval(int(np.sum(result.closest < e)), replicas) for e in eps]
    if len(eps) >= 3 and eps[0] < distance:
        trend, note = hitting_trend(eps, estimates, distance)
    else:
        trend, note = UNDECIDED, "ladder too short or eps beyond the start"
    return HittingEstimate(eps, estimates, trend, f"{note}; n={n}", n)


def radial_function(spec) -> Callable:
    """radial f >= 0 from {"kind": "constant" | "bump" | "indicator", ...}"""
    if callable(spec):
        return spec
    kind = spec.get("kind", "constant")
    if kind == "constant":
        value = float(spec.get("value", 0.0))
        return lambda r: np.full(np.shape(r), value)
    if kind == "bump":
        height, radius = float(spec.get("height", 1.0)), float(spec.get("radius", 1.0))
        return lambda r: height * np.square(np.clip(1.0 - np.square(np.asarray(r) / radius), 0.0, None))
    if kind == "indicator":
        height, radius = float(spec.get("height", 1.0)), float(spec.get("radius", 1.0))
        return lambda r: np.where(np.asarray(r) <= radius, height, 0.0)
    raise ConfigError(f"unknown test function kind {kind!r}")


@dataclass
class LogLaplaceReport:
    n_ladder: List[int]
    estimates: List[float]
    sigmas: List[float]
    oracle: float
    tolerance: float
    converging: bool
    within: bool

    @property
    def errors(self) -> List[float]:
        return [abs(e - self.oracle) for e in self.estimates]

    def to_rows(self) -> List[Dict[str, float]]:
        return [
            {"n": n, "estimate": e, "sigma": s, "oracle": self.oracle, "error": abs(e - self.oracle)}
            for n, e, s in zip(self.n_ladder, self.estimates, self.sigmas)
        ]


def loglaplace_oracle(config: ModelConfig, f: Callable, t: float, x0: float = 0.0,
                      radius: float = 8.0, nodes: int = 400, dt: float = 0.01) -> float:
    """exp(-u_f(x0, t)) with u_f from the PDE started at f on a large ball"""
    if t <= 0:
        return float(np.exp(-np.asarray(f(np.array([x0])), dtype=float)[0]))
    grid = clustered_grid(0.0, radius, nodes=nodes, cluster=())
    field = solve_semilinear(config, grid, initial=f, T=t, dt=dt)
    return float(np.exp(-field.at(x0, t)))


def loglaplace_check(
    config: ModelConfig,
    f_spec,
    t: float,
    n_ladder: Sequence[int],
    replicas: int,
    seed: int,
    tolerance: float = 1e-2,
    oracle_radius: float = 8.0,
    **kwargs,
) -> LogLaplaceReport:
    """
    Monte Carlo E exp(-<f, X_n(t)>) per n against exp(-u_f(0, t)); converging when
    the error does not grow along the ladder beyond noise, within when the last
    error is inside 3 sigma plus the tolerance.
    """
    f = radial_function(f_spec)
    oracle = loglaplace_oracle(config, f, t, radius=oracle_radius)
    estimates, sigmas = [], []
    for n in n_ladder:
        result = simulate(config, n, replicas, t, seed, laplace_f=f, **kwargs)
        samples = np.exp(-result.laplace)
        estimates.append(float(samples.mean()))
        sigmas.append(float(samples.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0)
    errors = [abs(e - oracle) for e in estimates]
    converging = all(b <= a + 3 * (sa + sb) + tolerance
                     for a, b, sa, sb in zip(errors, errors[1:], sigmas, sigmas[1:]))
    within = errors[-1] <= 3 * sigmas[-1] + tolerance
    return LogLaplaceReport(list(n_ladder), estimates, sigmas, oracle, tolerance, converging, within)


def support_radius_profile(
    config: ModelConfig,
    n: int,
    replicas: int,
    times: Sequence[float],
    seed: int,
    quantiles: Sequence[float] = QUANTILES,
    **kwargs,
) -> List[Dict[str, float]]:
    """empirical quantiles of the running max radius R_t at each time"""
    times = sorted(float(t) for t in times)
    T = times[-1] if times else 0.0
    result = simulate(config, n, replicas, T, seed, snap_times=times, **kwargs)
    rows = []
    for t in times:
        radii = result.snapshots[t]
        row = {"t": t}
        for q in quantiles:
            row[f"q{q:g}"] = float(np.quantile(radii, q, method="inverted_cdf"))
        rows.append(row)
    return rows
