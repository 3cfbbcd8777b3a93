from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import DimensionTooSmall, GridError, HypothesisUnmet, InvariantViolation, LadderTooCoarse, NoSaturation
from grid import RadialGrid, clustered_grid
from logger import get_logger
from model import (
    CoefficientSet,
    Constant,
    ModelConfig,
    Sum,
    build_coefficients,
    config_hash,
    validation_grid,
)
from solver import BoundaryCondition, Field, solve_semilinear
from stats import inverse_log_limit
from theory import Outcome, Verdict, predict_csp

logger = get_logger(__name__)

LEVEL_FLOOR = 10.0
LEVEL_CEILING = 1e250
LEVEL_FACTOR = 10.0
PROBE_CLEARANCE = 20
MONOTONE_TOL = 1e-4
ABS_FLOOR = 1e-12

ZERO_TOL = 1e-6
PLATEAU_TOL = 1e-2
TRIVIAL_RATIO = 0.2
NONTRIVIAL_RATIO = 0.5


@dataclass(frozen=True, eq=False)
class BlowupProblem:
    """
    Cauchy problem on a ball (lo = 0) or an annulus / interval with infinite
    boundary data, realised as a ladder of finite Dirichlet levels. Interval
    problems blow up at both ends; balls only at r = hi.
    """
    config: ModelConfig
    lo: float = 0.0
    hi: float = 5.0
    levels: Tuple[float, ...] = ()
    initial: float = 0.0
    probes: Tuple[float, ...] = (0.0,)
    nodes: int = 400
    dt: float = 0.01
    T: Optional[float] = None
    rel_tol: float = 1e-3
    max_levels: int = 8
    grid: Optional[RadialGrid] = None

    def __post_init__(self):
        if not self.hi > self.lo:
            raise GridError("blow-up problem needs hi > lo")
        levels = np.asarray(self.levels, dtype=float)
        if levels.size and np.any(np.diff(levels) <= 0):
            raise InvariantViolation("boundary levels must be strictly increasing")
        if self.initial < 0:
            raise InvariantViolation("initial data must be non-negative")

    @property
    def kind(self) -> str:
        if self.config.motion.line:
            return "interval"
        return "annulus" if self.lo > 0 else "ball"

    @property
    def both_ends(self) -> bool:
        return self.kind != "ball"

    @property
    def horizon(self) -> float:
        return self.config.horizon if self.T is None else self.T

    def make_grid(self) -> RadialGrid:
        if self.grid is not None:
            return self.grid
        cluster = ("lo", "hi") if self.both_ends else ("hi",)
        return clustered_grid(self.lo, self.hi, nodes=self.nodes, cluster=cluster)


def default_levels(problem: BlowupProblem, grid: RadialGrid, coeffs: CoefficientSet) -> Tuple[float, ...]:
    """
    ladder from ten times the space-free blow-up solution at the horizon,
    rising by 10^(1/(p-1)) per level while w^p stays in double range.
    """
    p = problem.config.p
    ceiling = min(LEVEL_CEILING, 10.0 ** (250.0 / p))
    ends = [grid.hi]
    if problem.both_ends:
        ends.append(grid.lo)

    start = LEVEL_FLOOR
    with np.errstate(all='ignore'):
        for r_b in ends:
            alpha_b = np.float64(np.asarray(coeffs.alpha(r_b)))
            if not alpha_b > 0:
                raise NoSaturation(f"alpha vanishes in double precision at the blow-up boundary r={r_b:g}")
            free = LEVEL_FACTOR * np.power((p - 1.0) * alpha_b * problem.horizon, -1.0 / (p - 1.0))
            if not np.isfinite(free) or free > ceiling:
                raise NoSaturation(f"boundary level {free:.3g} at r={r_b:g} leaves double range")
            start = max(start, float(free))

    factor = LEVEL_FACTOR ** (1.0 / (p - 1.0))
    levels = []
    level = start
    while len(levels) < problem.max_levels and level <= ceiling:
        levels.append(level)
        level *= factor
    return tuple(levels)


def _probe_values(field: Field, probes: Sequence[float]) -> np.ndarray:
    t = field.t[-1]
    return np.array([field.at(x, t) for x in probes])


def _check_probes(problem: BlowupProblem, grid: RadialGrid) -> None:
    for x in problem.probes:
        if not grid.lo <= x <= grid.hi:
            raise GridError(f"probe {x} outside ({grid.lo}, {grid.hi})")
        i = grid.index_of(x)
        if len(grid) - 1 - i < PROBE_CLEARANCE or (problem.both_ends and i < PROBE_CLEARANCE):
            raise GridError(f"probe {x} closer than {PROBE_CLEARANCE} nodes to a blow-up boundary")


def solve_blowup_ball(problem: BlowupProblem) -> Field:
    """
    :param problem: blow-up problem with its level ladder (computed when empty)
    :return: field of the first level whose probe values changed by less than
        rel_tol against the previous level; meta carries the probe sequence
    """
    config = problem.config
    grid = problem.make_grid()
    _check_probes(problem, grid)
    coeffs = build_coefficients(config)
    levels = problem.levels or default_levels(problem, grid, coeffs)

    previous: Optional[np.ndarray] = None
    history: List[List[float]] = []
    for level in levels:
        bc = BoundaryCondition.blowup(grid, level, both=problem.both_ends)
        field = solve_semilinear(config, grid, initial=problem.initial, boundary=bc,
                                 T=problem.horizon, dt=problem.dt, coeffs=coeffs)
        values = _probe_values(field, problem.probes)
        history.append(values.tolist())
        logger.debug(f"level {level:.3g} on ({grid.lo:g}, {grid.hi:g}): probes {values}")

        if previous is not None:
            if np.any(values < previous * (1 - MONOTONE_TOL) - ABS_FLOOR):
                raise InvariantViolation(f"probe values decreased when the boundary level rose to {level:.3g}")
            change = np.abs(values - previous)
            if np.all(change <= problem.rel_tol * np.abs(values) + ABS_FLOOR):
                field.meta.update({"level": level, "levels": list(levels), "probe_history": history})
                return field
        previous = values

    raise NoSaturation(f"no saturation over {len(levels)} levels up to {levels[-1]:.3g}")


def _ladder_value(config: ModelConfig, lo: float, hi: float, probe: float, t: float, **kwargs) -> float:
    problem = BlowupProblem(config, lo=lo, hi=hi, probes=(probe,), T=t, **kwargs)
    field = solve_blowup_ball(problem)
    return field.at(probe, field.t[-1])


def _solve_ladder(config: ModelConfig, pairs: List[Tuple[float, float]], probe: float, t: float,
                  threads: int = 1, **kwargs) -> List[float]:
    """probe value for every (lo, hi) pair, in input order"""
    if threads <= 1:
        return [_ladder_value(config, lo, hi, probe, t, **kwargs) for lo, hi in pairs]
    values: Dict[int, float] = {}
    with ThreadPoolExecutor(max_workers=threads) as executor:
        futures = {executor.submit(_ladder_value, config, lo, hi, probe, t, **kwargs): i
                   for i, (lo, hi) in enumerate(pairs)}
        for future in as_completed(futures):
            values[futures[future]] = future.result()
    return [values[i] for i in range(len(pairs))]


def check_nonincreasing(sequence: Sequence[float], what: str) -> None:
    s = np.asarray(sequence, dtype=float)
    if np.any(s[1:] > s[:-1] * (1 + MONOTONE_TOL) + ABS_FLOOR):
        raise InvariantViolation(f"{what} sequence is not non-increasing: {s}")


def plateau_verdict(sequence: Sequence[float], source: str) -> Verdict:
    s = tuple(float(x) for x in sequence)
    last = s[-1]
    if last < ZERO_TOL:
        return Verdict(Outcome.HOLDS, source, f"probe value {last:.3g} below {ZERO_TOL:g}", sequence=s)
    if last > 10 * ZERO_TOL and abs(s[-1] - s[-3]) / last < PLATEAU_TOL:
        return Verdict(Outcome.FAILS, source, f"probe value plateaus at {last:.3g}", sequence=s)
    return Verdict(Outcome.UNDETERMINED, source, "ladder neither vanished nor plateaued", sequence=s)


def umax_classify(
    config: ModelConfig,
    radii: Sequence[float] = (2.0, 4.0, 8.0, 16.0),
    probe: Tuple[float, float] = (0.0, 1.0),
    threads: int = 1,
    **kwargs,
) -> Verdict:
    """
    :param config: whole-space radial model
    :param radii: increasing ball radii, at least three
    :param probe: (x0, t)
    :param threads: concurrent ball solves
    :return: verdict on the compact support property; sequence holds u_m(x0, t)
    """
    radii = [float(m) for m in radii]
    if len(radii) < 3:
        raise LadderTooCoarse("umax classification needs at least three radii")
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise InvariantViolation("radii must be increasing")
    x0, t = probe
    sequence = _solve_ladder(config, [(0.0, m) for m in radii], x0, t, threads=threads, **kwargs)
    check_nonincreasing(sequence, "ball radius")
    verdict = plateau_verdict(sequence, "umax-ladder")
    logger.info(f"umax ladder {config_hash(config)}: {verdict.value.value} {sequence}")
    return verdict


def csp_probability(config: ModelConfig, m: float, t: float, x0: float = 0.0, **kwargs) -> float:
    """probability that the support started from a unit point mass at x0 stays in B_m up to t"""
    if t <= 0:
        return 1.0
    return float(np.exp(-_ladder_value(config, 0.0, m, x0, t, **kwargs)))


def epsilon_limit(eps: Sequence[float], values: Sequence[float], probe: float, source: str) -> Verdict:
    """
    trivial or nontrivial eps -> 0 limit from a fit values ~ a + b / log(probe / eps)
    """
    s = tuple(float(x) for x in values)
    last = s[-1]
    if last < ZERO_TOL:
        return Verdict(Outcome.HOLDS, source, f"probe value {last:.3g} below {ZERO_TOL:g}", sequence=s)
    limit, _ = inverse_log_limit(eps, s, probe)
    ratio = limit / last
    note = f"extrapolated limit {limit:.4g}, ratio {ratio:.3g}"
    if ratio <= TRIVIAL_RATIO:
        return Verdict(Outcome.HOLDS, source, note, sequence=s)
    if ratio >= NONTRIVIAL_RATIO:
        return Verdict(Outcome.FAILS, source, note, sequence=s)
    return Verdict(Outcome.UNDETERMINED, source, note, sequence=s)


def punctured_classify(
    config: ModelConfig,
    eps_ladder: Sequence[float] = (0.2, 0.1, 0.05, 0.025),
    radii: Sequence[float] = (2.0, 4.0, 8.0, 16.0),
    probe: float = 1.0,
    t: Optional[float] = None,
    threads: int = 1,
    **kwargs,
) -> Verdict:
    """
    double limit over annuli (eps, R) blowing up at both ends. FAILS means the
    limit is nontrivial, i.e. the process hits the puncture.
    """
    if config.d < 2:
        raise DimensionTooSmall("punctured classification needs d >= 2")
    eps_ladder = sorted((float(e) for e in eps_ladder), reverse=True)
    if len(eps_ladder) < 3:
        raise LadderTooCoarse("punctured classification needs at least three eps values")
    radii = sorted(float(R) for R in radii)
    if not (eps_ladder[0] < probe < radii[0]):
        raise GridError("probe must lie inside every annulus")
    t = config.horizon if t is None else t

    pairs = [(eps, R) for eps in eps_ladder for R in radii]
    flat = _solve_ladder(config, pairs, probe, t, threads=threads, **kwargs)
    values = []
    for i, eps in enumerate(eps_ladder):
        row = flat[i * len(radii):(i + 1) * len(radii)]
        check_nonincreasing(row, f"outer radius (eps={eps:g})")
        values.append(row[-1])
    verdict = epsilon_limit(eps_ladder, values, probe, "point-hitting")
    logger.info(f"punctured ladder {config_hash(config)}: {verdict.value.value} {values}")
    return verdict


@dataclass
class ComparisonReport:
    max_excess: float
    verdict1: Verdict
    verdict2: Verdict
    consistent: bool
    meta: Dict = field(default_factory=dict)


def _ordered(lower, upper, grid: np.ndarray) -> bool:
    with np.errstate(all='ignore'):
        a = np.asarray(lower(grid), dtype=float)
        b = np.asarray(upper(grid), dtype=float)
    ok = np.isfinite(a) & np.isfinite(b)
    return bool(np.all(a[ok] <= b[ok] + 1e-12 * np.maximum(np.abs(b[ok]), 1.0)))


def _verdicts_respect_order(smaller: Verdict, larger: Verdict) -> bool:
    """uniqueness for the larger field carries over to the smaller one"""
    return not (larger.value == Outcome.HOLDS and smaller.value == Outcome.FAILS)


def compare_solutions_monotonicity(
    config1: ModelConfig,
    config2: ModelConfig,
    radius: float = 5.0,
    t: Optional[float] = None,
    grid: Optional[RadialGrid] = None,
    **kwargs,
) -> ComparisonReport:
    """
    :param config1: alpha1 >= alpha2 and beta1 <= beta2 pointwise
    :param config2: the config with the larger solutions
    :param radius: ball radius m
    :param t: time of comparison
    :return: report with the largest u1 - u2 excess and both theory verdicts
    """
    points = validation_grid(config1.domain)
    if not _ordered(config2.alpha, config1.alpha, points):
        raise HypothesisUnmet("comparison needs alpha1 >= alpha2")
    if not _ordered(config1.beta, config2.beta, points):
        raise HypothesisUnmet("comparison needs beta1 <= beta2")

    fields = []
    for config in (config1, config2):
        problem = BlowupProblem(config, hi=radius, T=t, grid=grid, **kwargs)
        fields.append(solve_blowup_ball(problem))
    u1, u2 = fields[0].final(), fields[1].final()
    free = slice(0, u1.size - PROBE_CLEARANCE)
    excess = float(np.max((u1 - u2)[free]))
    scale = float(np.max(np.abs(u2[free]), initial=0.0))
    if excess > MONOTONE_TOL * max(scale, 1.0):
        raise InvariantViolation(f"u1 exceeds u2 by {excess:.3g} on the ball of radius {radius}")

    verdict1, verdict2 = predict_csp(config1), predict_csp(config2)
    return ComparisonReport(
        max_excess=excess,
        verdict1=verdict1,
        verdict2=verdict2,
        consistent=_verdicts_respect_order(verdict1, verdict2),
        meta={"config1": config_hash(config1), "config2": config_hash(config2), "radius": radius},
    )


@dataclass
class ShiftReport:
    shift: float
    max_deficit: float
    verdict1: Verdict
    verdict2: Verdict
    agree: bool


def beta_shift_check(
    config: ModelConfig,
    shift: float,
    radius: float = 5.0,
    probe: Tuple[float, float] = (0.0, 1.0),
    radii: Optional[Sequence[float]] = None,
    **kwargs,
) -> ShiftReport:
    """
    compares u1 (beta) with u2 (beta + shift) on one ball: exp(shift t) u1 >= u2.
    With radii given the verdicts come from umax_classify, otherwise from theory.

    :param config: base configuration
    :param shift: B >= 0
    :param radius: ball radius for the pointwise check
    :param probe: (x0, t) for the classifiers; t is also the comparison time
    :param radii: ball ladder for numeric classification
    """
    if shift < 0:
        raise HypothesisUnmet("shift must be non-negative")
    shifted = config if shift == 0 else config.replace(beta=Sum([config.beta, Constant(shift)]))
    x0, t = probe

    u1 = solve_blowup_ball(BlowupProblem(config, hi=radius, T=t, **kwargs)).final()
    u2 = solve_blowup_ball(BlowupProblem(shifted, hi=radius, T=t, **kwargs)).final()
    free = slice(0, u1.size - PROBE_CLEARANCE)
    deficit = float(np.max((u2 - np.exp(shift * t) * u1)[free]))
    scale = float(np.max(np.abs(u2[free]), initial=0.0))
    if deficit > MONOTONE_TOL * max(scale, 1.0):
        raise InvariantViolation(f"exp(Bt) u1 falls below u2 by {deficit:.3g}")

    if radii is not None:
        verdict1 = umax_classify(config, radii, probe, **kwargs)
        verdict2 = umax_classify(shifted, radii, probe, **kwargs)
    else:
        verdict1, verdict2 = predict_csp(config), predict_csp(shifted)
    agree = verdict1.value == verdict2.value or not (verdict1.decisive and verdict2.decisive)
    return ShiftReport(shift, deficit, verdict1, verdict2, agree)
