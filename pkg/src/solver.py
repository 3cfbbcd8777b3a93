import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from errors import NegativeValue, NonConvergence
from grid import RadialGrid, check_resolution
from logger import get_logger
from model import CoefficientSet, ModelConfig, build_coefficients, config_hash

logger = get_logger(__name__)

SYMMETRY = "symmetry"
ZERO_FLUX = "zero_flux"
DIRICHLET = "dirichlet"

NEWTON_MAX = 1000
NEWTON_TOL = 1e-12
ABS_FLOOR = 1e-280


@dataclass
class Field:
    """u(r_i, t_j) >= 0 on a radial grid; rows are time levels"""
    r: np.ndarray
    t: np.ndarray
    u: np.ndarray
    meta: Dict = field(default_factory=dict)

    def profile(self, t: float) -> np.ndarray:
        if t <= self.t[0]:
            return self.u[0]
        if t >= self.t[-1]:
            return self.u[-1]
        j = int(np.searchsorted(self.t, t))
        w = (t - self.t[j - 1]) / (self.t[j] - self.t[j - 1])
        return (1 - w) * self.u[j - 1] + w * self.u[j]

    def at(self, r: float, t: float) -> float:
        return float(np.interp(r, self.r, self.profile(t)))

    def final(self) -> np.ndarray:
        return self.u[-1]

    def to_rows(self) -> List[Dict[str, float]]:
        return [
            {"r": float(ri), "t": float(tj), "u": float(uij)}
            for tj, row in zip(self.t, self.u)
            for ri, uij in zip(self.r, row)
        ]


@dataclass(frozen=True)
class BoundaryCondition:
    left: str = SYMMETRY
    right: str = ZERO_FLUX
    left_value: float = 0.0
    right_value: float = 0.0

    @classmethod
    def default(cls, grid: RadialGrid) -> "BoundaryCondition":
        return cls(left=SYMMETRY if grid.symmetric_origin else ZERO_FLUX, right=ZERO_FLUX)

    @classmethod
    def blowup(cls, grid: RadialGrid, level: float, both: bool = False) -> "BoundaryCondition":
        if both:
            return cls(DIRICHLET, DIRICHLET, level, level)
        left = SYMMETRY if grid.symmetric_origin else ZERO_FLUX
        return cls(left, DIRICHLET, 0.0, level)

    def dirichlet_mask(self, size: int) -> np.ndarray:
        mask = np.zeros(size, dtype=bool)
        mask[0] = self.left == DIRICHLET
        mask[-1] = self.right == DIRICHLET
        return mask


def reaction_flow(u, alpha, beta, p: float, t: float) -> np.ndarray:
    """
    exact flow of u' = beta u - alpha u^p over time t, node by node; u = inf
    enters as the solution coming down from infinity.
    """
    u = np.asarray(u, dtype=float)
    with np.errstate(all='ignore'):
        y0 = np.where(u > 0, np.power(u, 1.0 - p), np.inf)
        x = (p - 1.0) * np.asarray(beta, dtype=float) * t
        phi = np.where(np.abs(x) < 1e-12, 1.0 - 0.5 * x, -np.expm1(-x) / np.where(x == 0, 1.0, x))
        y = np.where(np.isinf(y0), np.inf, y0 * np.exp(-x)) + (p - 1.0) * np.asarray(alpha, dtype=float) * t * phi
        out = np.power(y, -1.0 / (p - 1.0))
    return np.where(u > 0, out, 0.0)


def mass_ode(alpha: float, beta: float, p: float, lam0: float, t: float) -> float:
    """
    :param alpha: constant alpha > 0
    :param beta: constant beta
    :param p: power p > 1
    :param lam0: initial value in [0, inf]
    :param t: time >= 0
    :return: solution of u' = beta u - alpha u^p at time t
    """
    if not alpha > 0 or not p > 1:
        raise ValueError("mass ode needs alpha > 0 and p > 1")
    if lam0 == math.inf and t == 0:
        return math.inf
    return float(reaction_flow(np.array([lam0]), alpha, beta, p, t)[0])


def _operator(grid: RadialGrid, P: np.ndarray, Q: np.ndarray, bc: BoundaryCondition, d: float):
    """
    tridiagonal P u'' + Q u' on the nodes; central differences, upwinded where a
    central off-diagonal would turn negative.
    """
    r = grid.nodes
    n = r.size
    lower = np.zeros(n)
    upper = np.zeros(n)

    hm = r[1:-1] - r[:-2]
    hp = r[2:] - r[1:-1]
    total = hm + hp
    Pi, Qi = P[1:-1], Q[1:-1]
    lo_c = 2 * Pi / (hm * total) - Qi * hp / (hm * total)
    up_c = 2 * Pi / (hp * total) + Qi * hm / (hp * total)
    upwind = (lo_c < 0) | (up_c < 0)
    lo_u = 2 * Pi / (hm * total) + np.maximum(-Qi, 0) / hm
    up_u = 2 * Pi / (hp * total) + np.maximum(Qi, 0) / hp
    lower[1:-1] = np.where(upwind, lo_u, lo_c)
    upper[1:-1] = np.where(upwind, up_u, up_c)

    h0 = r[1] - r[0]
    if bc.left == SYMMETRY:
        # u_r(0) = 0; the Laplacian at the origin is d u_rr
        upper[0] = 2 * max(d, 1.0) * P[0] / h0 ** 2
    elif bc.left == ZERO_FLUX:
        upper[0] = 2 * P[0] / h0 ** 2

    hn = r[-1] - r[-2]
    if bc.right == ZERO_FLUX:
        lower[-1] = 2 * P[-1] / hn ** 2

    diag = -(lower + upper)
    return lower, diag, upper


def _apply(lower: np.ndarray, upper: np.ndarray, w: np.ndarray) -> np.ndarray:
    """L w for the tridiagonal operator"""
    Lw = -(lower + upper) * w
    Lw[1:] += lower[1:] * w[:-1]
    Lw[:-1] += upper[:-1] * w[1:]
    return Lw


def _jacobian(lower, upper, diagonal: np.ndarray, h: float, dirichlet: np.ndarray):
    lo = -h * lower
    up = -h * upper
    di = diagonal.copy()
    lo[dirichlet] = 0.0
    up[dirichlet] = 0.0
    di[dirichlet] = 1.0
    return sp.diags([lo[1:], di, up[:-1]], [-1, 0, 1], format="csc")


def _newton_step(
    u: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    alpha: np.ndarray,
    beta: np.ndarray,
    p: float,
    h: float,
    dirichlet: np.ndarray,
    newton_tol: float,
    newton_max: int,
) -> Tuple[Optional[np.ndarray], float, int]:
    """
    one backward Euler step w - h L w - h beta w + h alpha w^p = u, Newton from
    w = u. Past the first iterate the Newton sequence decreases to the solution.

    :return: (w or None when Newton failed, relative residual, iterations)
    """
    free = ~dirichlet
    w = u.copy()
    for k in range(1, newton_max + 1):
        pos = np.maximum(w, 0.0)
        with np.errstate(all='ignore'):
            reaction = h * alpha * np.power(pos, p)
            slope = h * alpha * p * np.power(pos, p - 1.0)
        G = w - h * _apply(lower, upper, w) - h * beta * w + reaction - u
        G[dirichlet] = 0.0
        J = _jacobian(lower, upper, 1.0 + h * (lower + upper) - h * beta + slope, h, dirichlet)
        delta = spsolve(J, G, permc_spec="NATURAL")
        if not np.all(np.isfinite(delta)):
            return None, math.inf, k
        w = w - delta
        if np.all(np.abs(delta[free]) <= newton_tol * np.abs(w[free]) + ABS_FLOOR):
            break
    else:
        logger.debug(f"newton stalled after {newton_max} iterations, falling back on the residual")

    pos = np.maximum(w, 0.0)
    with np.errstate(all='ignore'):
        reaction = h * alpha * np.power(pos, p)
    spread = h * (np.abs(lower) + np.abs(upper)) * np.abs(w)
    spread[1:] += h * np.abs(lower[1:]) * np.abs(w[:-1])
    spread[:-1] += h * np.abs(upper[:-1]) * np.abs(w[1:])
    G = w - h * _apply(lower, upper, w) - h * beta * w + reaction - u
    scale = np.abs(w) + spread + h * np.abs(beta * w) + reaction + np.abs(u) + np.finfo(float).tiny
    residual = float(np.max((np.abs(G) / scale)[free], initial=0.0))
    if not np.isfinite(residual):
        return None, math.inf, k
    return w, residual, k


def _evaluate(coeffs: CoefficientSet, r: np.ndarray, symmetric_origin: bool):
    with np.errstate(all='ignore'):
        P = np.asarray(coeffs.P(r), dtype=float)
        Q = np.asarray(coeffs.Q(r), dtype=float)
        alpha = np.asarray(coeffs.alpha(r), dtype=float)
        beta = np.asarray(coeffs.beta(r), dtype=float)
    if symmetric_origin:
        Q[0] = 0.0
    return P, np.nan_to_num(Q), alpha, beta


def solve_semilinear(
    config: ModelConfig,
    grid: RadialGrid,
    initial: Union[float, Callable, np.ndarray] = 0.0,
    boundary: Optional[BoundaryCondition] = None,
    T: Optional[float] = None,
    dt: float = 0.01,
    tol: float = 1e-6,
    min_dt: float = 1e-8,
    solve_tol: float = 1e-8,
    coeffs: Optional[CoefficientSet] = None,
    newton_tol: float = NEWTON_TOL,
    newton_max: int = NEWTON_MAX,
) -> Field:
    """
    Fully implicit backward Euler: each step solves
    w - dt (L w + beta w - alpha w^p) = u by Newton, L the discrete P u'' + Q u'.
    A step with dt * beta >= 1 somewhere, a failed Newton solve or a residual
    above solve_tol is retried with half the step.

    :param config: model configuration
    :param grid: radial grid
    :param initial: f >= 0 as constant, callable of r or node values
    :param boundary: boundary condition, defaults to symmetry / zero flux
    :param T: final time, defaults to the configured horizon
    :param dt: base time step
    :param tol: tolerated negative undershoot
    :param min_dt: halving floor
    :param solve_tol: relative residual allowed after the Newton solve
    :param newton_tol: relative update at which Newton stops
    :param newton_max: Newton iterations per step
    :return: Field with every accepted time level
    """
    coeffs = coeffs or build_coefficients(config)
    T = config.horizon if T is None else T
    bc = boundary or BoundaryCondition.default(grid)
    r = grid.nodes
    check_resolution(grid, coeffs.P)

    if callable(initial):
        u = np.asarray(initial(r), dtype=float).copy()
    else:
        u = np.broadcast_to(np.asarray(initial, dtype=float), r.shape).copy()
    if np.any(u < 0):
        raise NegativeValue("initial data must be non-negative")

    dirichlet = bc.dirichlet_mask(r.size)
    if bc.left == DIRICHLET:
        u[0] = bc.left_value
    if bc.right == DIRICHLET:
        u[-1] = bc.right_value

    P, Q, alpha, beta = _evaluate(coeffs, r, grid.symmetric_origin and bc.left == SYMMETRY)
    lower, _, upper = _operator(grid, P, Q, bc, config.d)
    p = config.p
    free = ~dirichlet
    # infinite killing at a node pins it to zero
    beta = np.nan_to_num(beta, nan=0.0, neginf=-1e300, posinf=np.inf)
    beta_max = float(np.max(np.where(free, beta, -np.inf), initial=-np.inf))

    times, rows = [0.0], [u.copy()]
    t = 0.0
    step = dt
    halvings = 0
    max_residual = 0.0
    iterations = 0

    while t < T - 1e-14 * max(T, 1.0):
        h = min(step, T - t)
        w, residual, k = None, math.inf, 0
        if h * beta_max < 1.0:
            w, residual, k = _newton_step(u, lower, upper, alpha, beta, p, h, dirichlet, newton_tol, newton_max)
        negative = w is not None and np.min(w[free], initial=0.0) < -tol
        if w is None or negative or not residual <= solve_tol:
            if h / 2 < min_dt:
                if negative:
                    raise NegativeValue(f"u < -{tol:g} at t={t:.6g} with dt at the floor")
                raise NonConvergence(f"step halving floor {min_dt:g} reached at t={t:.6g}")
            step = h / 2
            halvings += 1
            logger.debug(f"step rejected at t={t:.6g} after {k} newton iterations, halving to {step:g}")
            continue

        w[dirichlet] = u[dirichlet]
        u = np.maximum(w, 0.0)
        t += h
        max_residual = max(max_residual, residual)
        iterations = max(iterations, k)
        times.append(t)
        rows.append(u.copy())
        step = min(dt, 2 * step)

    meta = {
        "config_hash": config_hash(config),
        "steps": len(times) - 1,
        "halvings": halvings,
        "max_residual": max_residual,
        "newton_iterations": iterations,
        "boundary": (bc.left, bc.right, float(bc.left_value), float(bc.right_value)),
    }
    return Field(r=r.copy(), t=np.asarray(times), u=np.vstack(rows), meta=meta)
