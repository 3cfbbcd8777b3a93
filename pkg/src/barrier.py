import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import ConfigError, NoValidParameters
from grid import clustered_grid
from logger import get_logger
from model import ModelConfig, build_coefficients

logger = get_logger(__name__)

M_RK = "M_RK"
PSI_REPS = "Psi_Reps"

CLEARANCE = 1e-3
K_MAX = 2 ** 12
L_LADDER = tuple(2.0 ** -k for k in range(7))
GAMMA_LADDER = tuple(2.0 ** k for k in range(7))
R_MARGINS = (4.0, 8.0)
EPS_MARGINS = (4.0, 8.0)
RADII = (10.0, 100.0)
LOG_STEP = 0.1


@dataclass(frozen=True)
class BarrierCandidate:
    """
    closed-form supersolution candidate. M_RK blows up on |x| = R; Psi_Reps on
    |x| = eps and |x| = R, with eps given through log_eps so that tiny radii
    remain representable.
    """
    kind: str
    R: float
    p: float = 2.0
    K: float = 1.0
    log_eps: float = math.log(1e-2)
    l: float = 1.0
    gamma: float = 1.0
    smooth_origin: bool = True

    def __post_init__(self):
        if self.kind not in (M_RK, PSI_REPS):
            raise ConfigError(f"unknown barrier kind {self.kind}")
        if not self.p > 1 or not self.R > 0:
            raise ConfigError("barrier needs p > 1 and R > 0")
        if self.kind == PSI_REPS and not (0 < self.l <= 1 and self.gamma > 0 and self.log_eps < math.log(self.R)):
            raise ConfigError("Psi_Reps needs l in (0, 1], gamma > 0 and eps < R")

    @property
    def s(self) -> float:
        return 2.0 / (self.p - 1.0)

    def log_value(self, x, t: float = 0.0) -> np.ndarray:
        """log of the candidate; x is r for M_RK and log r for Psi_Reps"""
        x = np.asarray(x, dtype=float)
        with np.errstate(all='ignore'):
            if self.kind == M_RK:
                return self._log_m(x) + self.K * (t + 1.0)
            return self._log_phi(x) + self.gamma * (t + 1.0)

    def _log_m(self, r):
        s, R = self.s, self.R
        if self.smooth_origin:
            return 0.5 * s * np.log1p(r * r) - s * np.log((R * R - r * r) / R)
        return s * np.log1p(r) - s * np.log(R - r)

    def _log_phi(self, rho):
        s, R = self.s, self.R
        r = np.exp(rho)
        e = np.exp(self.log_eps - rho)
        log_gap = rho + np.log1p(-e) + math.log(R) + np.log1p(-r / R)
        tail = np.logaddexp(0.0, self.l * (self.log_eps - rho) + s * math.log(R))
        return -s * log_gap + s * np.log1p(r) + tail


@dataclass(frozen=True)
class StationaryCandidate:
    """W(r) = factor * kappa^(1/(p-1)) r^(-2/(p-1))"""
    kappa: float
    p: float = 2.0
    factor: float = 1.0

    def __post_init__(self):
        if not self.kappa > 0 or not self.p > 1 or not self.factor > 0:
            raise ConfigError("stationary candidate needs kappa > 0, p > 1 and a positive factor")

    @property
    def s(self) -> float:
        return 2.0 / (self.p - 1.0)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return self.factor * self.kappa ** (1.0 / (self.p - 1.0)) * np.power(r, -self.s)

    def derivatives(self, r) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        r = np.asarray(r, dtype=float)
        w = self(r)
        return w, -self.s * w / r, self.s * (self.s + 1.0) * w / (r * r)


def stationary_residual(candidate: StationaryCandidate, config: ModelConfig, grid=None) -> float:
    """
    :param candidate: stationary candidate W
    :param config: radial model on the punctured space
    :param grid: radii > 0, defaults to a log grid on [1e-2, 1e2]
    :return: max over the grid of |P W'' + Q W' + beta W - alpha W^p| divided by
        the largest of the four terms at the same node
    """
    r = np.logspace(-2, 2, 400) if grid is None else np.asarray(grid, dtype=float)
    if np.any(r <= 0):
        raise ConfigError("stationary residual needs r > 0")
    coeffs = build_coefficients(config)
    w, w1, w2 = candidate.derivatives(r)
    terms = np.vstack([
        coeffs.P(r) * w2,
        coeffs.Q(r) * w1,
        coeffs.beta(r) * w,
        -coeffs.alpha(r) * np.power(w, config.p),
    ])
    scale = np.max(np.abs(terms), axis=0)
    residual = np.abs(terms.sum(axis=0)) / np.where(scale > 0, scale, 1.0)
    return float(np.max(residual))


def _m_rk_expression(candidate: BarrierCandidate, config: ModelConfig, r: np.ndarray, t: float) -> np.ndarray:
    """L M / M for the radial A(r) Laplacian; finite for r in [0, R)"""
    coeffs = build_coefficients(config)
    s, R, p, d = candidate.s, candidate.R, config.p, config.d
    P = coeffs.P(r)
    with np.errstate(all='ignore'):
        if candidate.smooth_origin:
            g = s * r / (1 + r * r) + 2 * s * r / (R * R - r * r)
            g1 = s * (1 - r * r) / (1 + r * r) ** 2 + 2 * s * (R * R + r * r) / (R * R - r * r) ** 2
            g_over_r = s / (1 + r * r) + 2 * s / (R * R - r * r)
            log_power = np.log1p(r * r) + 2 * math.log(R) - 2 * np.log(R * R - r * r)
        else:
            g = s / (1 + r) + s / (R - r)
            g1 = -s / (1 + r) ** 2 + s / (R - r) ** 2
            g_over_r = g / r
            log_power = 2 * np.log1p(r) - 2 * np.log(R - r)
        absorption = coeffs.alpha(r) * np.exp(log_power + (p - 1) * candidate.K * (t + 1))
        drift = (d - 1) * P * g_over_r if d != 1 else 0.0
        return P * (g1 + g * g) + drift + coeffs.beta(r) - absorption - candidate.K


def _psi_expression(candidate: BarrierCandidate, config: ModelConfig, rho: np.ndarray, t: float) -> np.ndarray:
    """
    r^2 L psi / psi in log-radius coordinates; G = r (log psi)_r and its rho
    derivative are bounded, so nothing overflows for tiny eps.
    """
    coeffs = build_coefficients(config)
    s, R, l, p, d = candidate.s, candidate.R, candidate.l, config.p, config.d
    with np.errstate(all='ignore'):
        r = np.exp(rho)
        e = np.exp(candidate.log_eps - rho)
        w = 1.0 / (1.0 + np.exp(-(l * (candidate.log_eps - rho) + s * math.log(R))))
        G = -s * (1.0 / (1.0 - e) - r / (R - r)) + s * r / (1.0 + r) - l * w
        dG = s * e / (1.0 - e) ** 2 + s * r * R / (R - r) ** 2 + s * r / (1.0 + r) ** 2 + l * l * w * (1.0 - w)
        P = coeffs.P(r)
        k, rest = config.beta.inverse_square_part()
        r2_beta = k + (r * r * rest(r) if rest is not None else 0.0)
        r2_beta = np.where(np.isfinite(r2_beta), r2_beta, k)
        log_power = 2 * rho + (p - 1) * candidate.log_value(rho, t)
        absorption = coeffs.alpha(r) * np.exp(log_power)
        return (P * (dG - G + G * G) + (d - 1) * P * G + r2_beta
                - candidate.gamma * r * r - absorption)


def m_rk_grid(R: float, nodes: int = 400, clearance: float = CLEARANCE) -> np.ndarray:
    return clustered_grid(0.0, R * (1 - clearance), nodes=nodes, cluster=("hi",)).nodes


def psi_grid(R: float, log_eps: float, clearance: float = CLEARANCE, points: int = 200) -> np.ndarray:
    """log-radius nodes on (eps, R), refined towards both singular ends"""
    q = np.logspace(math.log10(clearance), 2, points)
    inner = log_eps + np.log1p(q)
    outer = math.log(R) + np.log1p(-np.logspace(math.log10(clearance), math.log10(0.5), points))[::-1]
    lo, hi = inner[-1], math.log(R / 2)
    middle = np.linspace(lo, hi, max(points, int(math.ceil((hi - lo) / LOG_STEP))))
    rho = np.concatenate([inner, middle, outer])
    return np.unique(rho[(rho > log_eps) & (rho < math.log(R))])


def verify_barrier(
    candidate: BarrierCandidate,
    config: ModelConfig,
    grid: Optional[np.ndarray] = None,
    window: Tuple[float, float] = (0.0, 1.0),
    clearance: float = CLEARANCE,
    times: int = 5,
) -> float:
    """
    :param candidate: barrier candidate
    :param config: radial model; whole space for M_RK, punctured for Psi_Reps
    :param grid: r nodes (M_RK) or log r nodes (Psi_Reps)
    :param window: time window [t0, t1]
    :param clearance: relative distance kept from the singular boundary
    :param times: time nodes in the window
    :return: max of the parabolic operator applied to the candidate, divided by the
        candidate (and multiplied by r^2 for Psi_Reps); <= 0 means supersolution
    """
    if config.motion.line:
        raise ConfigError("barriers are defined for radial motions")
    worst = -math.inf
    for t in np.linspace(window[0], window[1], times):
        if candidate.kind == M_RK:
            r = m_rk_grid(candidate.R, clearance=clearance) if grid is None else np.asarray(grid, dtype=float)
            if not candidate.smooth_origin:
                r = r[r > 0]
            values = _m_rk_expression(candidate, config, r, t)
        else:
            rho = psi_grid(candidate.R, candidate.log_eps, clearance) if grid is None else np.asarray(grid, dtype=float)
            values = _psi_expression(candidate, config, rho, t)
        values = np.where(np.isnan(values), math.inf, values)
        worst = max(worst, float(np.max(values)))
    return worst


@dataclass
class BarrierFit:
    kind: str
    params: Dict[str, float]
    violation: float
    checked: int = 0
    meta: Dict = field(default_factory=dict)


def search_m_rk(
    config: ModelConfig,
    radii: Sequence[float] = RADII,
    window: Tuple[float, float] = (0.0, 1.0),
    smooth_origin: bool = True,
) -> BarrierFit:
    """smallest K = 2^j making M_RK a supersolution for every radius of the ladder"""
    K = 1.0
    checked = 0
    while K <= K_MAX:
        worst = -math.inf
        for R in radii:
            candidate = BarrierCandidate(M_RK, R=R, p=config.p, K=K, smooth_origin=smooth_origin)
            worst = max(worst, verify_barrier(candidate, config, window=window))
            checked += 1
            if worst > 0:
                break
        if worst <= 0:
            logger.info(f"M_RK barrier holds with K={K:g} on radii {list(radii)}")
            return BarrierFit(M_RK, {"K": K}, worst, checked)
        K *= 2
    raise NoValidParameters(f"no K <= {K_MAX} gives an M_RK supersolution")


def psi_ladder(p: float, l: float, gamma: float, t1: float = 1.0,
               r_margins: Sequence[float] = R_MARGINS,
               eps_margins: Sequence[float] = EPS_MARGINS) -> List[Tuple[float, float]]:
    """
    (R, log eps) pairs for one (l, gamma). R^2 exceeds exp((p-1) gamma (t1+1))
    by 10^m, so the absorption cannot offset the creation term away from the
    boundaries; eps^l R^s = 10^-j keeps the eps-tail inside a thin shell.
    """
    s = 2.0 / (p - 1.0)
    pairs = []
    for m in r_margins:
        log_R = 0.5 * ((p - 1.0) * gamma * (t1 + 1.0) + m * math.log(10))
        for j in eps_margins:
            pairs.append((math.exp(log_R), -(s * log_R + j * math.log(10)) / l))
    return pairs


def search_psi(
    config: ModelConfig,
    window: Tuple[float, float] = (0.0, 1.0),
    l_ladder: Sequence[float] = L_LADDER,
    gamma_ladder: Sequence[float] = GAMMA_LADDER,
    r_margins: Sequence[float] = R_MARGINS,
    eps_margins: Sequence[float] = EPS_MARGINS,
) -> BarrierFit:
    """
    first (l, gamma) for which Psi_Reps is a supersolution on every (R, eps)
    of psi_ladder; l is scanned downwards, gamma upwards.
    """
    checked = 0
    for l in l_ladder:
        for gamma in gamma_ladder:
            worst = -math.inf
            for R, log_eps in psi_ladder(config.p, l, gamma, window[1], r_margins, eps_margins):
                candidate = BarrierCandidate(PSI_REPS, R=R, p=config.p, log_eps=log_eps, l=l, gamma=gamma)
                worst = max(worst, verify_barrier(candidate, config, window=window))
                checked += 1
                if worst > 0:
                    break
            if worst <= 0:
                logger.info(f"Psi_Reps barrier holds with l={l:g}, gamma={gamma:g}")
                return BarrierFit(PSI_REPS, {"l": l, "gamma": gamma}, worst, checked)
    raise NoValidParameters("no (l, gamma) on the ladder gives a Psi_Reps supersolution")
