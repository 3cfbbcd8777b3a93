from typing import List, Optional, Sequence

import numpy as np

from blowup import BlowupProblem, check_nonincreasing, epsilon_limit, solve_blowup_ball
from errors import BadDomain, DimensionTooSmall, GridError, InvariantViolation, LadderTooCoarse
from grid import RadialGrid, clustered_grid
from logger import get_logger
from model import (
    ChartDiffusion,
    ChartDrift,
    FullSpace,
    LineGenerator,
    ModelConfig,
    PullBack,
    Punctured,
    chart_radius,
    config_hash,
)
from theory import Verdict

logger = get_logger(__name__)

ASYMPTOTIC_TOL = 0.05
FAR = 1e3


def chart_coordinate(r):
    """z = 1/r - r, decreasing from +inf at the puncture to -inf at infinity"""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide='ignore'):
        return 1.0 / r - r


def check_asymptotics(line: LineGenerator, d: float, far: float = FAR) -> None:
    """
    a(z) ~ 2P z^4 and b(z) ~ (3 - d) P z^3 as z -> inf; a -> 2P and b -> 0 as
    z -> -inf, P being the radial diffusion coefficient at r(z).
    """
    motion = line.source_motion()
    if motion is None:
        raise InvariantViolation("line generator was not built by the chart")
    z = np.array([far, -far])
    P = motion.A(chart_radius(z))
    a, b = line.a(z), line.b(z)

    ratios = {
        "a / (2 P z^4) at +inf": (a[0] / (2 * P[0] * far ** 4), 1.0),
        "b / (P z^3) at +inf": (b[0] / (P[0] * far ** 3), 3.0 - d),
        "a / (2 P) at -inf": (a[1] / (2 * P[1]), 1.0),
    }
    for name, (value, target) in ratios.items():
        if abs(value - target) > ASYMPTOTIC_TOL * max(1.0, abs(target)):
            raise InvariantViolation(f"{name} is {value:.4g}, expected {target:.4g}")
    if abs(b[1]) > ASYMPTOTIC_TOL * max(1.0, P[1]):
        raise InvariantViolation(f"b(-inf) is {b[1]:.4g}, expected 0")


def change_of_variables_line(config: ModelConfig) -> ModelConfig:
    """
    :param config: radial model on the punctured space
    :return: the same model written on the line through z = 1/r - r, alpha and
        beta pulled back to z
    """
    if not isinstance(config.domain, Punctured):
        raise BadDomain("the line chart starts from a punctured radial model")
    if config.d < 2:
        raise DimensionTooSmall("the line chart needs d >= 2")
    if config.motion.line:
        raise BadDomain("motion is already on the line")

    line = LineGenerator(
        a=ChartDiffusion(config.motion, config.d),
        b=ChartDrift(config.motion, config.d),
        source_d=float(config.d),
    )
    check_asymptotics(line, config.d)
    return ModelConfig(
        d=1,
        p=config.p,
        motion=line,
        alpha=PullBack(config.alpha),
        beta=PullBack(config.beta),
        domain=FullSpace(),
        horizon=config.horizon,
    )


def chart_grid(eps: float, R: float, nodes: int = 400) -> RadialGrid:
    """image of the two-sided clustered radial grid on (eps, R), in increasing z"""
    radial = clustered_grid(eps, R, nodes=nodes, cluster=("lo", "hi"))
    return RadialGrid(chart_coordinate(radial.nodes)[::-1].copy())


def line_classify(
    config: ModelConfig,
    eps_ladder: Sequence[float] = (0.2, 0.1, 0.05, 0.025),
    radii: Sequence[float] = (2.0, 4.0, 8.0, 16.0),
    probe: float = 1.0,
    t: Optional[float] = None,
    nodes: int = 400,
    **kwargs,
) -> Verdict:
    """
    punctured classification carried out on the line: the annulus (eps, R)
    becomes the interval (1/R - R, 1/eps - eps) with blow-up at both ends.
    """
    if not config.motion.line:
        raise BadDomain("line classification needs a line generator")
    eps_ladder = sorted((float(e) for e in eps_ladder), reverse=True)
    if len(eps_ladder) < 3:
        raise LadderTooCoarse("line classification needs at least three eps values")
    radii = sorted(float(R) for R in radii)
    if not (eps_ladder[0] < probe < radii[0]):
        raise GridError("probe must lie inside every annulus")
    t = config.horizon if t is None else t
    z_probe = float(chart_coordinate(probe))

    values: List[float] = []
    for eps in eps_ladder:
        row = []
        for R in radii:
            grid = chart_grid(eps, R, nodes)
            problem = BlowupProblem(config, lo=grid.lo, hi=grid.hi, probes=(z_probe,), T=t,
                                    grid=grid, **kwargs)
            field = solve_blowup_ball(problem)
            row.append(field.at(z_probe, field.t[-1]))
        check_nonincreasing(row, f"outer radius (eps={eps:g})")
        values.append(row[-1])

    verdict = epsilon_limit(eps_ladder, values, probe, "line-chart")
    logger.info(f"line ladder {config_hash(config)}: {verdict.value.value} {values}")
    return verdict
