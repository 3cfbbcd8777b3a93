import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from errors import DimensionTooSmall, UnboundedShift
from logger import get_logger
from model import (
    Ball,
    Annulus,
    ChartDiffusion,
    Constant,
    FullSpace,
    ModelConfig,
    NegPower,
    PowerLaw,
    PullBack,
    Punctured,
    RadialPower,
    StretchedExp,
    Sum,
    TableMotion,
    numerically_bounded_above,
    validation_grid,
)

logger = get_logger(__name__)


class Outcome(str, Enum):
    HOLDS = "Holds"
    FAILS = "Fails"
    UNDETERMINED = "Undetermined"
    CONSERVATIVE = "Conservative"
    EXPLODES = "Explodes"


@dataclass(frozen=True)
class Verdict:
    """
    classification result with its provenance. Undetermined verdicts carry the
    hypotheses that were not met; numeric verdicts carry the raw sequence.
    """
    value: Outcome
    source: str
    note: str = ""
    unmet: Tuple[str, ...] = ()
    sequence: Tuple[float, ...] = ()

    @property
    def decisive(self) -> bool:
        return self.value != Outcome.UNDETERMINED

    @property
    def hits(self) -> Optional[bool]:
        """reading of a punctured-domain verdict as a point-hitting statement"""
        if self.value == Outcome.FAILS:
            return True
        if self.value == Outcome.HOLDS:
            return False
        return None

    def with_source(self, source: str, note: str = "") -> "Verdict":
        return replace(self, source=source, note=note or self.note)

    def to_row(self, config_hash: str) -> Dict[str, str]:
        note = self.note
        if self.unmet:
            note = "; ".join(filter(None, [note, "unmet: " + ", ".join(self.unmet)]))
        return {
            "config_hash": config_hash,
            "value": self.value.value,
            "source": self.source,
            "note": note,
        }


def undetermined(source: str, unmet: List[str], note: str = "") -> Verdict:
    return Verdict(Outcome.UNDETERMINED, source, note, tuple(unmet))


def beta0(d: float, p: float) -> float:
    """critical inverse-square coefficient (d(p-1) - 2p)/(p-1)^2"""
    if not p > 1:
        raise ValueError("p must exceed 1")
    return (d * (p - 1) - 2 * p) / (p - 1) ** 2


def critical_dimension(p: float) -> float:
    return 2 * p / (p - 1)


# --- syntactic hypothesis matching ---------------------------------------------

def _growth_exponent(config: ModelConfig) -> Optional[float]:
    motion = config.motion
    if isinstance(motion, RadialPower):
        return motion.m
    # tables extrapolate by constants, so they are bounded above and below
    if isinstance(motion, TableMotion):
        return 0.0
    return None


def _is_zero(coef) -> bool:
    return bool(coef.nonnegative()) and bool(coef.nonpositive())


def _alpha_stretched_lower(alpha, m: float) -> bool:
    """alpha >= C1 exp(-C2 r^(2-m)) for some C1, C2 > 0"""
    if alpha.inf_positive():
        return True
    if isinstance(alpha, StretchedExp):
        return alpha.C1 > 0 and alpha.s <= 2 - m
    if isinstance(alpha, PowerLaw):
        return alpha.c > 0 and m < 2
    if isinstance(alpha, Sum):
        return bool(alpha.nonnegative()) and any(_alpha_stretched_lower(t, m) for t in alpha.terms)
    return False


def _alpha_decay_excess(alpha, m: float) -> Optional[float]:
    """epsilon with alpha <= C exp(-r^(2-m+eps)), or None"""
    if isinstance(alpha, StretchedExp) and alpha.decays() and alpha.s > 2 - m:
        return alpha.s - (2 - m)
    if isinstance(alpha, Sum):
        excess = [_alpha_decay_excess(t, m) for t in alpha.terms]
        if all(e is not None for e in excess):
            return min(excess)
    return None


def _beta_lower_delta(beta, m: float) -> Optional[float]:
    """delta with beta >= -C(1+r)^(2-m+2 delta); -inf when beta is bounded below"""
    if beta.bounded_below():
        return -math.inf
    if isinstance(beta, NegPower) and beta.C > 0:
        return (beta.q - (2 - m)) / 2
    if isinstance(beta, PowerLaw) and beta.c < 0:
        return (beta.q - (2 - m)) / 2
    if isinstance(beta, Sum):
        deltas = [_beta_lower_delta(t, m) for t in beta.terms]
        if any(dl is None for dl in deltas):
            return None
        return max(deltas)
    return None


def _alpha_dominates_power(alpha, exponent: float) -> bool:
    """alpha >= c(1+r)^exponent for some c > 0"""
    if exponent <= 0 and alpha.inf_positive():
        return True
    if isinstance(alpha, PowerLaw):
        return alpha.c > 0 and alpha.q >= exponent
    if isinstance(alpha, Sum):
        return bool(alpha.nonnegative()) and any(_alpha_dominates_power(t, exponent) for t in alpha.terms)
    return False


# --- whole-space rules ------------------------------------------------------------

Rule = Callable[[ModelConfig, List[str]], Optional[Verdict]]


def growth_bounded_positive_alpha(config: ModelConfig, unmet: List[str]) -> Optional[Verdict]:
    m = _growth_exponent(config)
    if m is None or m > 2:
        unmet.append("growth-bounded-positive-alpha: A(r) <= C(1+r)^2")
        return None
    if not config.alpha.inf_positive():
        unmet.append("growth-bounded-positive-alpha: inf alpha > 0")
        return None
    return Verdict(Outcome.HOLDS, "growth-bounded-positive-alpha", "coefficients grow at most quadratically")


def stretched_alpha_lower_bound(config: ModelConfig, unmet: List[str]) -> Optional[Verdict]:
    m = _growth_exponent(config)
    if m is None or not 0 <= m <= 2:
        unmet.append("stretched-alpha-lower-bound: m in [0, 2]")
        return None
    if not _alpha_stretched_lower(config.alpha, m):
        unmet.append("stretched-alpha-lower-bound: alpha >= C1 exp(-C2 r^(2-m))")
        return None
    return Verdict(Outcome.HOLDS, "stretched-alpha-lower-bound", f"m={m}")


def fast_decaying_alpha(config: ModelConfig, unmet: List[str]) -> Optional[Verdict]:
    m = _growth_exponent(config)
    if m is None or not 0 <= m <= 2:
        unmet.append("fast-decaying-alpha: m in [0, 2]")
        return None
    eps = _alpha_decay_excess(config.alpha, m)
    if eps is None:
        unmet.append("fast-decaying-alpha: alpha <= C exp(-r^(2-m+eps))")
        return None
    delta = _beta_lower_delta(config.beta, m)
    if delta is None:
        unmet.append("fast-decaying-alpha: beta >= -C(1+r)^(2-m+2 delta)")
        return None
    if delta < eps:
        return Verdict(Outcome.FAILS, "fast-decaying-alpha", f"eps={eps:g}, delta={delta:g}")
    if delta == eps:
        return undetermined("fast-decaying-alpha", ["delta < eps"], f"boundary case delta = eps = {eps:g}")
    unmet.append("fast-decaying-alpha: delta < eps")
    return None


def _bounded_alpha_nonneg_beta(config: ModelConfig, rule: str, unmet: List[str]) -> bool:
    if not config.alpha.bounded_above():
        unmet.append(f"{rule}: sup alpha < inf")
        return False
    if not config.beta.nonnegative():
        unmet.append(f"{rule}: beta >= 0")
        return False
    return True


def fast_motion_plane(config: ModelConfig, unmet: List[str]) -> Optional[Verdict]:
    m = _growth_exponent(config)
    if config.d < 2 or m is None or not m > 2:
        unmet.append("fast-motion-plane: d >= 2 and m > 2")
        return None
    if not _bounded_alpha_nonneg_beta(config, "fast-motion-plane", unmet):
        return None
    return Verdict(Outcome.FAILS, "fast-motion-plane", f"m={m}, d={config.d}")


def fast_motion_line(config: ModelConfig, unmet: List[str]) -> Optional[Verdict]:
    m = _growth_exponent(config)
    if config.d != 1 or m is None or not m > 1 + config.p:
        unmet.append("fast-motion-line: d = 1 and m > 1 + p")
        return None
    if not _bounded_alpha_nonneg_beta(config, "fast-motion-line", unmet):
        return None
    return Verdict(Outcome.FAILS, "fast-motion-line", f"m={m} > 1+p={1 + config.p}")


def slow_motion_line(config: ModelConfig, unmet: List[str]) -> Optional[Verdict]:
    m = _growth_exponent(config)
    if config.d != 1 or m is None or m > 1 + config.p:
        unmet.append("slow-motion-line: d = 1 and m <= 1 + p")
        return None
    if not config.alpha.inf_positive():
        unmet.append("slow-motion-line: inf alpha > 0")
        return None
    if not config.beta.nonpositive():
        unmet.append("slow-motion-line: beta <= 0")
        return None
    return Verdict(Outcome.HOLDS, "slow-motion-line", f"m={m} <= 1+p={1 + config.p}")


def growing_alpha_stationary(config: ModelConfig, unmet: List[str]) -> Optional[Verdict]:
    motion = config.motion
    if not isinstance(motion, RadialPower):
        unmet.append("growing-alpha-stationary: A(r) = (1+r)^m")
        return None
    if not _is_zero(config.beta):
        unmet.append("growing-alpha-stationary: beta = 0")
        return None
    if not _alpha_dominates_power(config.alpha, motion.m - 2):
        unmet.append("growing-alpha-stationary: alpha >= c(1+r)^(m-2)")
        return None
    return Verdict(Outcome.HOLDS, "growing-alpha-stationary", "no positive stationary solution")


EXACT_RULES: List[Rule] = [
    growth_bounded_positive_alpha,
    stretched_alpha_lower_bound,
    fast_decaying_alpha,
    fast_motion_plane,
    fast_motion_line,
    slow_motion_line,
    growing_alpha_stationary,
]


def _first_exact(config: ModelConfig) -> Optional[Verdict]:
    for rule in EXACT_RULES:
        verdict = rule(config, [])
        if verdict is not None and verdict.decisive:
            return verdict
    return None


def comparison_rule(config: ModelConfig, unmet: List[str]) -> Optional[Verdict]:
    if _is_zero(config.beta):
        unmet.append("comparison: beta differs from 0")
        return None
    base = _first_exact(config.replace(beta=Constant(0.0)))
    if base is None:
        unmet.append("comparison: decisive verdict at beta = 0")
        return None
    if base.value == Outcome.HOLDS and config.beta.nonpositive():
        return Verdict(Outcome.HOLDS, "comparison", f"beta <= 0 and {base.source} at beta = 0")
    if base.value == Outcome.FAILS and config.beta.nonnegative():
        return Verdict(Outcome.FAILS, "comparison", f"beta >= 0 and {base.source} at beta = 0")
    unmet.append("comparison: beta sign compatible with the beta = 0 verdict")
    return None


def beta_shift_rule(config: ModelConfig, unmet: List[str]) -> Optional[Verdict]:
    if not (config.beta.bounded_above() and config.beta.bounded_below()):
        unmet.append("beta-shift: beta bounded")
        return None
    base = _first_exact(config.replace(beta=Constant(0.0)))
    if base is None:
        unmet.append("beta-shift: decisive verdict at beta = 0")
        return None
    return Verdict(base.value, "beta-shift", f"bounded beta; {base.source} at beta = 0")


def explosive_creation(config: ModelConfig, unmet: List[str]) -> Optional[Verdict]:
    if predict_explosion(config).value != Outcome.EXPLODES:
        unmet.append("explosive-creation: motion explodes")
        return None
    if not (config.beta.inf_positive() and config.alpha.bounded_above()):
        unmet.append("explosive-creation: inf beta/alpha > 0")
        return None
    return Verdict(Outcome.FAILS, "explosive-creation", "explosive motion with mass creation")


def explosive_bounded_branching(config: ModelConfig, unmet: List[str]) -> Optional[Verdict]:
    if predict_explosion(config).value != Outcome.EXPLODES:
        unmet.append("explosive-bounded-branching: motion explodes")
        return None
    if not config.alpha.bounded_above():
        unmet.append("explosive-bounded-branching: sup alpha < inf")
        return None
    if not config.beta.bounded_below():
        unmet.append("explosive-bounded-branching: inf beta > -inf")
        return None
    return Verdict(Outcome.FAILS, "explosive-bounded-branching", "explosive motion, bounded branching")


EXTENSION_RULES: List[Rule] = [
    comparison_rule,
    beta_shift_rule,
    explosive_creation,
    explosive_bounded_branching,
]


# --- punctured-space rules ------------------------------------------------------------

def _laplacian_multiple(config: ModelConfig) -> Optional[float]:
    motion = config.motion
    if isinstance(motion, RadialPower) and motion.m == 0:
        return motion.coefficient
    return None


def _punctured_rules(config: ModelConfig, unmet: List[str]) -> List[Verdict]:
    """every decisive punctured-space verdict, in priority order"""
    a = _laplacian_multiple(config)
    if a is None:
        unmet.append("punctured: motion is a constant multiple of the Laplacian")
        return []
    d, p = config.d, config.p
    # A = a is 1/2 Laplacian after the scaling x -> x / sqrt(2a)
    threshold = 2 * a * beta0(d, p)
    k, remainder = config.beta.inverse_square_part()
    alpha = config.alpha
    found: List[Verdict] = []

    if d >= critical_dimension(p):
        if alpha.inf_positive():
            note = "" if config.beta.nonpositive() else "hitting reading needs local extinction"
            found.append(Verdict(Outcome.HOLDS, "punctured-high-dimension", note))
        else:
            unmet.append("punctured-high-dimension: inf alpha > 0")
        return found

    if k < threshold:
        if alpha.inf_positive():
            found.append(Verdict(Outcome.HOLDS, "inverse-square-damping",
                                 f"limsup r^2 beta = {k:g} < {threshold:g}"))
        else:
            unmet.append("inverse-square-damping: inf alpha > 0")
        return found
    if k == threshold:
        unmet.append("inverse-square: limsup r^2 beta differs from the critical value")
        return found

    if not alpha.bounded_above():
        unmet.append("punctured-low-dimension: sup alpha < inf")
        return found
    if config.beta.bounded_below():
        found.append(Verdict(Outcome.FAILS, "punctured-low-dimension", f"d={d} < {critical_dimension(p):g}"))
    if k < 0 and (remainder is None or remainder.bounded_below()):
        found.append(Verdict(Outcome.FAILS, "inverse-square-creation",
                             f"r^2 beta -> {k:g} > {threshold:g}"))
    if not found:
        unmet.append("punctured-low-dimension: beta bounded below")
    return found


def predict_point_hitting(config: ModelConfig) -> Verdict:
    """
    :param config: model on the punctured space, or on the whole space with the origin marked
    :return: verdict on the compact support property of the punctured process;
        FAILS reads as "hits the origin with positive probability"
    """
    if config.d < 2:
        raise DimensionTooSmall("point hitting needs d >= 2")
    if not isinstance(config.domain, (Punctured, FullSpace)):
        return undetermined("point-hitting", ["punctured or whole-space domain"])
    unmet: List[str] = []
    found = _punctured_rules(config, unmet)
    if found:
        logger.debug(f"point hitting rule {found[0].source} fired for {config!r}")
        return found[0]
    return undetermined("point-hitting", unmet)


# --- explosion ---------------------------------------------------------------------------

def predict_explosion(config: ModelConfig) -> Verdict:
    motion = config.motion
    m = _growth_exponent(config)
    if m is not None:
        if m <= 2:
            return Verdict(Outcome.CONSERVATIVE, "growth-bound", f"m={m} <= 2")
        if config.d >= 3:
            return Verdict(Outcome.EXPLODES, "radial-explosion", f"m={m} > 2, d={config.d}")
        note = ("time change of planar Brownian motion, not explosive"
                if config.d == 2 else "time change of a recurrent motion")
        return undetermined("radial-explosion", ["d >= 3"], note)

    if motion.line and isinstance(motion.a, ChartDiffusion):
        source = motion.a.motion
        d_source = motion.a.d
        if isinstance(source, RadialPower) and source.m <= 2 and d_source >= 2:
            return Verdict(Outcome.CONSERVATIVE, "growth-bound",
                           "inherited from the radial motion, origin polar")
    return undetermined("explosion", ["radial power or chart line motion"])


# --- compact support ----------------------------------------------------------------------

def _punctured_source(config: ModelConfig) -> Optional[ModelConfig]:
    """the punctured radial problem a chart line config was built from"""
    motion = config.motion
    if not (motion.line and isinstance(motion.a, ChartDiffusion)):
        return None
    if not (isinstance(config.alpha, PullBack) and isinstance(config.beta, PullBack)):
        return None
    return ModelConfig(
        d=motion.a.d,
        p=config.p,
        motion=motion.a.motion,
        alpha=config.alpha.base,
        beta=config.beta.base,
        domain=Punctured(),
        horizon=config.horizon,
    )


def predict_csp(config: ModelConfig) -> Verdict:
    """
    first decisive rule in priority order, exact hypotheses before extensions.
    """
    if config.motion.line:
        source = _punctured_source(config)
        if source is None:
            return undetermined("no-rule", ["line motion obtained from a punctured radial problem"])
        return predict_csp(source)

    if isinstance(config.domain, Punctured):
        try:
            return predict_point_hitting(config)
        except DimensionTooSmall:
            return undetermined("point-hitting", ["d >= 2"])
    if isinstance(config.domain, (Ball, Annulus)):
        return undetermined("no-rule", ["whole-space or punctured domain"])

    if config.p > 2:
        return undetermined("no-rule", ["p <= 2"], "no branching interpretation for p > 2")

    unmet: List[str] = []
    pending: Optional[Verdict] = None
    for rule in EXACT_RULES + EXTENSION_RULES:
        verdict = rule(config, unmet)
        if verdict is None:
            continue
        if verdict.decisive:
            logger.debug(f"rule {verdict.source} fired for {config!r}")
            return verdict
        pending = pending or verdict
    if pending is not None:
        return pending
    return undetermined("no-rule", unmet)


def fired_rules(config: ModelConfig) -> List[Verdict]:
    """every decisive rule for the config, used for self-consistency checks"""
    if isinstance(config.domain, Punctured):
        if config.d < 2:
            return []
        return _punctured_rules(config, [])
    if config.p > 2 or not isinstance(config.domain, FullSpace) or config.motion.line:
        return []
    found = []
    for rule in EXACT_RULES + EXTENSION_RULES:
        verdict = rule(config, [])
        if verdict is not None and verdict.decisive:
            found.append(verdict)
    return found


def _same_setting(config_base: ModelConfig, config_new: ModelConfig) -> bool:
    return (
        config_base.motion.to_dict() == config_new.motion.to_dict()
        and config_base.d == config_new.d
        and config_base.p == config_new.p
        and config_base.domain.to_dict() == config_new.domain.to_dict()
    )


def _shift_bounded(diff: np.ndarray, grid: np.ndarray, bound: float = math.inf) -> bool:
    magnitude = np.abs(diff)
    if not np.all(np.isfinite(magnitude)):
        return False
    if magnitude.max(initial=0.0) > bound:
        return False
    return numerically_bounded_above(magnitude, grid)


def comparison_extend(base_verdict: Verdict, config_base: ModelConfig, config_new: ModelConfig) -> Verdict:
    """
    carries a verdict across a pointwise ordering of (alpha, beta). A bounded
    difference in beta may stand in for the ordering of beta.
    """
    if not _same_setting(config_base, config_new):
        return undetermined("comparison", ["same motion, d, p and domain"])
    if base_verdict.value not in (Outcome.HOLDS, Outcome.FAILS):
        if config_base.to_dict() == config_new.to_dict():
            return base_verdict
        return undetermined("comparison", ["decisive base verdict"])

    grid = validation_grid(config_new.domain, line=config_new.motion.line)
    with np.errstate(all='ignore'):
        a_base, a_new = config_base.alpha(grid), config_new.alpha(grid)
        b_base, b_new = config_base.beta(grid), config_new.beta(grid)
        diff = b_new - b_base
    tol = 1e-12
    alpha_up = np.all(a_new >= a_base * (1 - tol))
    alpha_down = np.all(a_new <= a_base * (1 + tol))
    beta_down = np.all(b_new <= b_base + tol * np.abs(b_base))
    beta_up = np.all(b_new >= b_base - tol * np.abs(b_base))
    shift_ok = _shift_bounded(np.nan_to_num(diff, nan=0.0), grid)

    if base_verdict.value == Outcome.HOLDS and alpha_up and (beta_down or shift_ok):
        source = "comparison" if beta_down else "beta-shift"
        return Verdict(Outcome.HOLDS, source, f"from {base_verdict.source}")
    if base_verdict.value == Outcome.FAILS and alpha_down and (beta_up or shift_ok):
        source = "comparison" if beta_up else "beta-shift"
        return Verdict(Outcome.FAILS, source, f"from {base_verdict.source}")
    return undetermined("comparison", ["alpha and beta ordered in the direction of the verdict"])


def beta_shift_invariance(config: ModelConfig, shifted_beta, shift_bound: float = math.inf) -> Verdict:
    """
    :param config: configuration with beta_1
    :param shifted_beta: beta_2 coefficient
    :param shift_bound: allowed sup |beta_1 - beta_2|
    :return: verdict shared by both configurations
    """
    grid = validation_grid(config.domain, line=config.motion.line)
    with np.errstate(all='ignore'):
        diff = shifted_beta(grid) - config.beta(grid)
    diff = np.nan_to_num(diff, nan=0.0)
    if not _shift_bounded(diff, grid, shift_bound):
        raise UnboundedShift(f"beta shift of size up to {np.max(np.abs(diff)):g} is not bounded by {shift_bound:g}")

    verdict = predict_csp(config)
    if not verdict.decisive:
        verdict = predict_csp(config.replace(beta=shifted_beta))
    return Verdict(verdict.value, "beta-shift", f"copied from {verdict.source}", verdict.unmet)
