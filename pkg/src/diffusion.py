import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from errors import DegenerateGenerator, QuadratureFailure, StepSizeTooLarge
from logger import get_logger
from model import Annulus, Ball, ModelConfig, build_coefficients, validation_grid
from stats import Estimate, spawn_rngs, wilson_interval
from theory import Outcome, Verdict, undetermined

logger = get_logger(__name__)

FELLER_TOL = 1e-3
GROWTH_RATIO = 0.9
STEP_FRACTION = 0.05
CHUNK = 250


@dataclass(frozen=True, eq=False)
class RadialGenerator:
    """
    one-dimensional generator P(r) u'' + Q(r) u' on (r_lo, r_hi). For the
    d-dimensional A(r) Laplacian, P = A and Q = A (d-1)/r and A, d are kept so
    paths can be stepped in the squared radius.
    """
    P: Callable
    Q: Callable
    r_lo: float = 0.0
    r_hi: float = math.inf
    kind: str = "radial"
    d: Optional[float] = None
    A: Optional[Callable] = None

    def __post_init__(self):
        line = self.kind == "line"
        grid = validation_grid(line=line)
        if not line:
            grid = grid[(grid > self.r_lo) & (grid < self.r_hi)]
        with np.errstate(all='ignore'):
            values = np.asarray(self.P(grid), dtype=float)
        if np.any(~(values > 0)):
            raise DegenerateGenerator("diffusion coefficient P must be positive on the open interval")


def radial_generator(config: ModelConfig) -> RadialGenerator:
    coeffs = build_coefficients(config)
    if config.motion.line:
        return RadialGenerator(P=coeffs.P, Q=coeffs.Q, r_lo=-math.inf, r_hi=math.inf, kind="line")

    r_lo, r_hi = 0.0, math.inf
    if isinstance(config.domain, Ball):
        r_hi = config.domain.R
    elif isinstance(config.domain, Annulus):
        r_lo, r_hi = config.domain.eps, config.domain.R
    return RadialGenerator(
        P=coeffs.P, Q=coeffs.Q, r_lo=r_lo, r_hi=r_hi, kind="radial", d=config.d, A=coeffs.A,
    )


# --- Feller test -------------------------------------------------------------------------

def _log_segments(g: np.ndarray, h: np.ndarray) -> np.ndarray:
    """
    log of the integral of exp(g) over each cell, g interpolated linearly.
    """
    g0, g1 = g[:-1], g[1:]
    hi = np.maximum(g0, g1)
    lo = np.minimum(g0, g1)
    with np.errstate(all='ignore'):
        gap = hi - lo
        exact = np.log(h) + hi + np.log(-np.expm1(-gap)) - np.log(gap)
    flat = np.log(h) + 0.5 * (hi + lo)
    out = np.where(gap < 1e-12, flat, exact)
    # a cell that starts at exp(-inf) = 0 is integrated by the trapezoid rule
    return np.where(np.isneginf(lo), np.log(0.5 * h) + hi, out)


def _feller_log_integral(P, Q, anchor: float, outer: float, steps_per_decade: int):
    decades = math.log10(outer / anchor)
    n = int(round(decades * steps_per_decade)) + 1
    x = anchor * np.power(10.0, np.arange(n) / steps_per_decade)
    with np.errstate(all='ignore'):
        p = np.asarray(P(x), dtype=float)
        q = np.asarray(Q(x), dtype=float)
        ratio = q / p
        log_p = np.log(p)
    if not (np.all(np.isfinite(ratio)) and np.all(np.isfinite(log_p))):
        raise QuadratureFailure("non-finite integrand in the scale density")

    h = np.diff(x)
    S = np.concatenate([[0.0], np.cumsum(0.5 * h * (ratio[:-1] + ratio[1:]))])
    # G(r) = int_{r0}^{r} exp(S - log P)
    seg = _log_segments(S - log_p, h)
    log_G = np.concatenate([[-np.inf], np.logaddexp.accumulate(seg)])
    log_f = log_G - S
    seg = _log_segments(log_f, h)
    log_I = np.concatenate([[-np.inf], np.logaddexp.accumulate(seg)])
    if np.any(np.isnan(log_I)):
        raise QuadratureFailure("non-finite Feller integral")
    return x, log_I


def _feller_end(P, Q, anchor: float, outer: float, steps_per_decade: int) -> Tuple[Outcome, Tuple[float, ...]]:
    x, log_I = _feller_log_integral(P, Q, anchor, outer, steps_per_decade)
    ladder_idx = np.arange(steps_per_decade, x.size, steps_per_decade)
    values = log_I[ladder_idx]
    if values.size < 4:
        return Outcome.UNDETERMINED, tuple(values)

    with np.errstate(all='ignore'):
        rel = -np.expm1(values[:-1] - values[1:])
        log_inc = values[1:] + np.log(rel)
    if np.all(rel[-3:] < FELLER_TOL):
        return Outcome.EXPLODES, tuple(values)
    if np.all(log_inc[-3:] >= math.log(GROWTH_RATIO) + log_inc[-4:-1]):
        return Outcome.CONSERVATIVE, tuple(values)
    return Outcome.UNDETERMINED, tuple(values)


def feller_explosion_test(
    gen: RadialGenerator,
    anchor: float = 1.0,
    outer: float = 1e12,
    steps_per_decade: int = 400,
) -> Verdict:
    """
    Feller integral over the ladder R_k = anchor * 10^k, evaluated in log space.

    :param gen: radial or line generator
    :param anchor: interior anchor point r0
    :param outer: last ladder point
    :param steps_per_decade: log-spaced quadrature nodes per decade
    :return: Explodes, Conservative or Undetermined, with the log Feller integrals as sequence
    """
    if not anchor > 0 or not outer > anchor:
        raise QuadratureFailure("anchor must be positive and below the outer limit")
    if math.isfinite(gen.r_hi):
        return undetermined("feller-test", ["outer end at infinity"])

    outcome, sequence = _feller_end(gen.P, gen.Q, anchor, outer, steps_per_decade)
    if gen.kind == "line":
        def mirrored_P(y):
            return gen.P(-np.asarray(y))

        def mirrored_Q(y):
            return -np.asarray(gen.Q(-np.asarray(y)))

        other, _ = _feller_end(mirrored_P, mirrored_Q, anchor, outer, steps_per_decade)
        if Outcome.EXPLODES in (outcome, other):
            outcome = Outcome.EXPLODES
        elif outcome == other == Outcome.CONSERVATIVE:
            outcome = Outcome.CONSERVATIVE
        else:
            outcome = Outcome.UNDETERMINED

    logger.debug(f"feller test: {outcome.value}, log integrals {sequence[-4:]}")
    return Verdict(outcome, "feller-test", f"ladder {anchor:g}..{outer:g}", sequence=sequence)


# --- path simulation -------------------------------------------------------------------------

class PathExit(str, Enum):
    NONE = "None"
    HIT_OUTER_CAP = "HitOuterCap"
    HIT_INNER_BOUNDARY = "HitInnerBoundary"


@dataclass
class PathSample:
    times: np.ndarray
    radii: np.ndarray
    exit: PathExit = PathExit.NONE
    exit_time: float = math.inf


@dataclass
class PathBatch:
    """end state of many independent paths"""
    final: np.ndarray
    exit_code: np.ndarray
    exit_time: np.ndarray
    cap_times: np.ndarray = field(default=None)


_EXIT_CODES = [PathExit.NONE, PathExit.HIT_OUTER_CAP, PathExit.HIT_INNER_BOUNDARY]


def _squared_radius(gen: RadialGenerator) -> bool:
    return gen.kind == "radial" and gen.A is not None and gen.d is not None and gen.d != 1


def _run_paths(
    gen: RadialGenerator,
    x0: float,
    dt: float,
    T: float,
    caps: Sequence[float],
    count: int,
    rng: np.random.Generator,
    adaptive: bool = True,
    record: bool = False,
):
    """
    Euler steps of count paths with per-path step sizes; the squared radius is
    stepped for A(r) Laplacian motions so the origin needs no special care.
    """
    caps = np.asarray(sorted(caps), dtype=float)
    cap = caps[-1]
    squared = _squared_radius(gen)
    line = gen.kind == "line"

    r = np.full(count, float(x0))
    t = np.zeros(count)
    exit_code = np.zeros(count, dtype=int)
    exit_time = np.full(count, math.inf)
    cap_times = np.full((count, caps.size), math.inf)
    active = np.full(count, T > 0)
    path_t, path_r = [0.0], [float(x0)]

    while active.any():
        idx = np.flatnonzero(active)
        ri = r[idx]
        scale = np.maximum(np.abs(ri), 1.0)
        with np.errstate(all='ignore'):
            if squared:
                A = np.asarray(gen.A(ri), dtype=float)
                limit = (STEP_FRACTION * scale) ** 2 / (2.0 * A * max(gen.d, 1.0))
            else:
                P = np.asarray(gen.P(ri), dtype=float)
                Q = np.asarray(gen.Q(ri), dtype=float)
                limit = np.minimum(
                    (STEP_FRACTION * scale) ** 2 / (2.0 * P),
                    STEP_FRACTION * scale / np.abs(Q),
                )
        step = np.minimum(dt, np.nan_to_num(limit, nan=dt, posinf=dt)) if adaptive else np.full(idx.size, dt)
        step = np.minimum(step, T - t[idx])
        if np.any(step <= 0):
            raise StepSizeTooLarge("adaptive step collapsed to zero near a singular drift")
        z = rng.standard_normal(idx.size)

        if squared:
            rho = ri * ri
            rho = rho + 2.0 * gen.d * A * step + 2.0 * np.sqrt(2.0 * A * rho * step) * z
            new = np.sqrt(np.abs(rho))
        else:
            new = ri + Q * step + np.sqrt(2.0 * P * step) * z
            if not line and gen.r_lo == 0:
                new = np.abs(new)

        if not adaptive and np.any(np.abs(new - ri) > cap / 10):
            raise StepSizeTooLarge(f"radius moved more than cap/10 in one step of size {dt:g}; reduce dt")

        t[idx] += step
        r[idx] = new
        reach = np.abs(new) if line else new
        crossed = (reach[:, None] >= caps[None, :]) & np.isinf(cap_times[idx])
        if crossed.any():
            block = cap_times[idx]
            block[crossed] = np.broadcast_to(t[idx][:, None], block.shape)[crossed]
            cap_times[idx] = block

        out = reach >= cap
        inner = (~out) & (not line) & (gen.r_lo > 0) & (new <= gen.r_lo)
        exit_code[idx[out]] = 1
        exit_code[idx[inner]] = 2
        exit_time[idx[out | inner]] = t[idx[out | inner]]
        active[idx] = ~(out | inner) & (t[idx] < T)

        if record:
            path_t.append(float(t[0]))
            path_r.append(float(r[0]))

    batch = PathBatch(final=r, exit_code=exit_code, exit_time=exit_time, cap_times=cap_times)
    if record:
        return batch, np.asarray(path_t), np.asarray(path_r)
    return batch


def simulate_path(
    gen: RadialGenerator,
    x0: float,
    dt: float,
    T: float,
    cap: float,
    seed: int,
    adaptive: bool = True,
) -> PathSample:
    if not dt > 0:
        raise StepSizeTooLarge("dt must be positive")
    rng = np.random.default_rng(seed)
    batch, times, radii = _run_paths(gen, x0, dt, T, [cap], 1, rng, adaptive=adaptive, record=True)
    return PathSample(
        times=times,
        radii=radii,
        exit=_EXIT_CODES[int(batch.exit_code[0])],
        exit_time=float(batch.exit_time[0]),
    )


def simulate_paths(
    gen: RadialGenerator,
    x0: float,
    dt: float,
    T: float,
    caps: Sequence[float],
    replicas: int,
    seed: int,
    threads: int = 1,
    chunk: int = CHUNK,
) -> PathBatch:
    """
    replicas split into fixed-size chunks, one spawned stream each, merged in chunk
    order so the result does not depend on the thread count.
    """
    sizes = [min(chunk, replicas - start) for start in range(0, replicas, chunk)]
    rngs = spawn_rngs(seed, len(sizes))

    def work(k):
        return _run_paths(gen, x0, dt, T, caps, sizes[k], rngs[k])

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            parts = list(executor.map(work, range(len(sizes))))
    else:
        parts = [work(k) for k in range(len(sizes))]

    if not parts:
        empty = np.zeros(0)
        return PathBatch(empty, empty.astype(int), empty, np.zeros((0, len(caps))))
    return PathBatch(
        final=np.concatenate([b.final for b in parts]),
        exit_code=np.concatenate([b.exit_code for b in parts]),
        exit_time=np.concatenate([b.exit_time for b in parts]),
        cap_times=np.concatenate([b.cap_times for b in parts]),
    )


def _plateau(previous: Estimate, last: Estimate) -> bool:
    change = abs(previous.value - last.value)
    return change == 0 or change < max(previous.sigma, last.sigma)


@dataclass
class ExplosionEstimate:
    caps: Tuple[float, ...]
    estimates: List[Estimate]
    last_cap: Estimate
    verdict: Verdict

    def to_rows(self):
        return [
            {"cap": cap, "replicas": est.trials, "estimate": est.value, "ci_lo": est.ci_lo, "ci_hi": est.ci_hi}
            for cap, est in zip(self.caps, self.estimates)
        ]


def explosion_probability_mc(
    gen: RadialGenerator,
    x0: float,
    T: float,
    caps: Sequence[float],
    replicas: int,
    seed: int,
    dt: float = 0.01,
    threads: int = 1,
) -> ExplosionEstimate:
    """
    :param caps: increasing cap ladder, normally x10 apart
    :return: P(tau_cap <= T) per cap; the largest cap bounds P(tau_inf <= T) from above
    """
    caps = tuple(float(c) for c in caps)
    if list(caps) != sorted(caps):
        raise ValueError("caps must be increasing")

    if T <= 0:
        estimates = [wilson_interval(0, replicas) for _ in caps]
    else:
        batch = simulate_paths(gen, x0, dt, T, caps, replicas, seed, threads=threads)
        hits = (batch.cap_times <= T).sum(axis=0)
        estimates = [wilson_interval(int(k), replicas) for k in hits]

    last = estimates[-1]
    if last.successes == 0:
        outcome = Outcome.CONSERVATIVE
    elif len(estimates) >= 2 and _plateau(estimates[-2], last):
        outcome = Outcome.EXPLODES
    else:
        outcome = Outcome.UNDETERMINED

    sequence = tuple(e.value for e in estimates)
    logger.info(f"explosion estimate over caps {caps}: {sequence} -> {outcome.value}")
    verdict = Verdict(outcome, "cap-ladder", f"last cap {last.value:.4g} [{last.ci_lo:.4g}, {last.ci_hi:.4g}]",
                      sequence=sequence)
    return ExplosionEstimate(caps=caps, estimates=estimates, last_cap=last, verdict=verdict)
