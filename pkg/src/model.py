import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from errors import (
    BadDomain,
    ConfigError,
    NonPositiveAlpha,
    SupcritError,
    UnboundedBeta,
)
from logger import get_logger

logger = get_logger(__name__)

# radii on which standing assumptions are checked
VALIDATION_LO = 1e-6
VALIDATION_HI = 1e6
VALIDATION_POINTS = 1024
BETA_THRESHOLD = 1e4


def validation_grid(domain=None, line: bool = False) -> np.ndarray:
    """
    1024 log-spaced radii in [1e-6, 1e6], clipped to the domain. On the line the
    grid is mirrored so both ends are covered.
    """
    radii = np.logspace(np.log10(VALIDATION_LO), np.log10(VALIDATION_HI), VALIDATION_POINTS)
    if line:
        half = radii[::2]
        return np.concatenate([-half[::-1], half])
    if domain is not None:
        radii = radii[domain.contains(radii)]
    return radii


def numerically_bounded_above(
    values: np.ndarray,
    grid: np.ndarray,
    threshold: float = BETA_THRESHOLD,
) -> bool:
    """
    decides sup < inf from samples: never above the threshold, and the end decades
    do not rise more than 1.5x over the middle ones.
    """
    values = np.asarray(values, dtype=float)
    scale = np.abs(np.asarray(grid, dtype=float))
    vals = np.where(np.isnan(values), -np.inf, values)
    if vals.size == 0:
        return True
    if np.any(vals > threshold):
        return False

    low = scale <= 1e-5
    high = scale >= 1e5
    middle = ~(low | high)
    mid_max = vals[middle].max() if middle.any() else -np.inf
    reference = max(mid_max, 1.0)
    for tail in (low, high):
        if tail.any() and vals[tail].max() > 1.5 * reference:
            return False
    return True


def chart_radius(z):
    """inverse of z = 1/r - r on (0, inf)"""
    z = np.asarray(z, dtype=float)
    root = np.sqrt(z * z + 4.0)
    with np.errstate(divide='ignore', invalid='ignore'):
        positive = 2.0 / (root + z)
    return np.where(z >= 0, positive, 0.5 * (root - z))


class Coefficient:
    """
    radial function r -> value. Subclasses know a few structural facts about
    themselves (boundedness, sign); None means the fact is unknown.
    """
    kind = "coefficient"

    def __call__(self, r) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> Dict[str, Any]:
        raise NotImplementedError

    def bounded_above(self) -> Optional[bool]:
        return None

    def bounded_below(self) -> Optional[bool]:
        return None

    def inf_positive(self) -> Optional[bool]:
        return None

    def positive(self) -> Optional[bool]:
        return None

    def nonnegative(self) -> Optional[bool]:
        return None

    def nonpositive(self) -> Optional[bool]:
        return None

    def inverse_square_part(self) -> Tuple[float, Optional["Coefficient"]]:
        """
        splits the function into k/r^2 plus a remainder.

        :return: (k, remainder) with remainder None when nothing is left
        """
        return 0.0, self

    def __repr__(self):
        params = ", ".join(f"{k}={v}" for k, v in self.to_dict().items() if k != "kind")
        return f"{type(self).__name__}({params})"


class Constant(Coefficient):
    kind = "constant"

    def __init__(self, c: float):
        self.c = float(c)

    def __call__(self, r):
        return np.full(np.shape(r), self.c, dtype=float)

    def to_dict(self):
        return {"kind": self.kind, "c": self.c}

    def bounded_above(self):
        return True

    def bounded_below(self):
        return True

    def inf_positive(self):
        return self.c > 0

    def positive(self):
        return self.c > 0

    def nonnegative(self):
        return self.c >= 0

    def nonpositive(self):
        return self.c <= 0

    def inverse_square_part(self):
        return 0.0, (self if self.c != 0 else None)


class PowerLaw(Coefficient):
    """c(1+r)^q"""
    kind = "power_law"

    def __init__(self, c: float, q: float):
        self.c = float(c)
        self.q = float(q)

    def __call__(self, r):
        return self.c * np.power(1.0 + np.asarray(r, dtype=float), self.q)

    def to_dict(self):
        return {"kind": self.kind, "c": self.c, "q": self.q}

    def bounded_above(self):
        return self.c <= 0 or self.q <= 0

    def bounded_below(self):
        return self.c >= 0 or self.q <= 0

    def inf_positive(self):
        return self.c > 0 and self.q >= 0

    def positive(self):
        return self.c > 0

    def nonnegative(self):
        return self.c >= 0

    def nonpositive(self):
        return self.c <= 0


class StretchedExp(Coefficient):
    """C1 exp(-C2 r^s)"""
    kind = "stretched_exp"

    def __init__(self, C1: float, C2: float, s: float):
        if C2 < 0 or s < 0:
            raise ConfigError("stretched exponential needs C2 >= 0 and s >= 0")
        self.C1 = float(C1)
        self.C2 = float(C2)
        self.s = float(s)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return self.C1 * np.exp(-self.C2 * np.power(np.abs(r), self.s))

    def to_dict(self):
        return {"kind": self.kind, "C1": self.C1, "C2": self.C2, "s": self.s}

    def decays(self) -> bool:
        return self.C2 > 0 and self.s > 0

    def bounded_above(self):
        return True

    def bounded_below(self):
        return True

    def inf_positive(self):
        return self.C1 > 0 and not self.decays()

    def positive(self):
        return self.C1 > 0

    def nonnegative(self):
        return self.C1 >= 0

    def nonpositive(self):
        return self.C1 <= 0


class InverseSquareAt0(Coefficient):
    """kappa0 / r^2"""
    kind = "inverse_square"

    def __init__(self, kappa0: float):
        self.kappa0 = float(kappa0)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide='ignore'):
            return self.kappa0 / (r * r)

    def to_dict(self):
        return {"kind": self.kind, "kappa0": self.kappa0}

    def bounded_above(self):
        return self.kappa0 <= 0

    def bounded_below(self):
        return self.kappa0 >= 0

    def inf_positive(self):
        return False

    def positive(self):
        return self.kappa0 > 0

    def nonnegative(self):
        return self.kappa0 >= 0

    def nonpositive(self):
        return self.kappa0 <= 0

    def inverse_square_part(self):
        return self.kappa0, None


class NegPower(Coefficient):
    """-C(1+r)^q"""
    kind = "neg_power"

    def __init__(self, C: float, q: float):
        self.C = float(C)
        self.q = float(q)

    def __call__(self, r):
        return -self.C * np.power(1.0 + np.asarray(r, dtype=float), self.q)

    def to_dict(self):
        return {"kind": self.kind, "C": self.C, "q": self.q}

    def bounded_above(self):
        return self.C >= 0 or self.q <= 0

    def bounded_below(self):
        return self.C <= 0 or self.q <= 0

    def inf_positive(self):
        return self.C < 0 and self.q >= 0

    def positive(self):
        return self.C < 0

    def nonnegative(self):
        return self.C <= 0

    def nonpositive(self):
        return self.C >= 0


def _all_true(flags: List[Optional[bool]]) -> Optional[bool]:
    if all(f is True for f in flags):
        return True
    if any(f is None for f in flags):
        return None
    # exactly one unbounded term cannot be cancelled by bounded ones
    if sum(1 for f in flags if f is False) == 1:
        return False
    return None


class Sum(Coefficient):
    """pointwise sum, used to express bounded shifts of beta"""
    kind = "sum"

    def __init__(self, terms: List[Coefficient]):
        if not terms:
            raise ConfigError("sum needs at least one term")
        self.terms = list(terms)

    def __call__(self, r):
        total = np.zeros(np.shape(r), dtype=float)
        for term in self.terms:
            total = total + term(r)
        return total

    def to_dict(self):
        return {"kind": self.kind, "terms": [t.to_dict() for t in self.terms]}

    def bounded_above(self):
        return _all_true([t.bounded_above() for t in self.terms])

    def bounded_below(self):
        return _all_true([t.bounded_below() for t in self.terms])

    def nonnegative(self):
        return True if all(t.nonnegative() for t in self.terms) else None

    def nonpositive(self):
        return True if all(t.nonpositive() for t in self.terms) else None

    def positive(self):
        if self.nonnegative() and any(t.positive() for t in self.terms):
            return True
        return None

    def inf_positive(self):
        if self.nonnegative() and any(t.inf_positive() for t in self.terms):
            return True
        return None

    def inverse_square_part(self):
        k = 0.0
        rest = []
        for term in self.terms:
            kt, remainder = term.inverse_square_part()
            k += kt
            if remainder is not None:
                rest.append(remainder)
        if not rest:
            return k, None
        return k, (rest[0] if len(rest) == 1 else Sum(rest))

    def __repr__(self):
        return f"Sum({self.terms!r})"


class TableFunction(Coefficient):
    """
    user samples, interpolated linearly in log r with constant extrapolation.
    """
    kind = "table"

    def __init__(self, r, values):
        r = np.asarray(r, dtype=float)
        values = np.asarray(values, dtype=float)
        if r.ndim != 1 or r.shape != values.shape or r.size < 2:
            raise ConfigError("table needs matching one-dimensional r and value samples")
        if np.any(r <= 0) or np.any(np.diff(r) <= 0):
            raise ConfigError("table radii must be positive and increasing")
        self.r = r
        self.values = values
        self._log_r = np.log(r)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide='ignore'):
            log_r = np.log(np.maximum(r, 0.0))
        return np.interp(log_r, self._log_r, self.values)

    def to_dict(self):
        return {"kind": self.kind, "r": self.r.tolist(), "values": self.values.tolist()}

    def bounded_above(self):
        return True

    def bounded_below(self):
        return True

    def inf_positive(self):
        return bool(self.values.min() > 0)

    def positive(self):
        return bool(self.values.min() > 0)

    def nonnegative(self):
        return bool(self.values.min() >= 0)

    def nonpositive(self):
        return bool(self.values.max() <= 0)

    def __repr__(self):
        return f"TableFunction(n={self.r.size})"


class PullBack(Coefficient):
    """base coefficient read on the line through r(z)"""
    kind = "pull_back"

    def __init__(self, base: Coefficient):
        self.base = base

    def __call__(self, z):
        return self.base(chart_radius(z))

    def to_dict(self):
        return {"kind": self.kind, "base": self.base.to_dict()}

    def bounded_above(self):
        return self.base.bounded_above()

    def bounded_below(self):
        return self.base.bounded_below()

    def inf_positive(self):
        return self.base.inf_positive()

    def positive(self):
        return self.base.positive()

    def nonnegative(self):
        return self.base.nonnegative()

    def nonpositive(self):
        return self.base.nonpositive()


# --- motions -----------------------------------------------------------------

class Motion:
    kind = "motion"
    line = False

    def to_dict(self) -> Dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class RadialPower(Motion):
    """A(r) = coefficient * (1+r)^m inside the two-sided C0 envelope; L = A(r) Laplacian"""
    m: float = 0.0
    C0: float = 1.0
    coefficient: float = 1.0
    kind = "radial_power"

    def A(self, r):
        return self.coefficient * np.power(1.0 + np.asarray(r, dtype=float), self.m)

    def to_dict(self):
        return {"kind": self.kind, "m": self.m, "C0": self.C0, "coefficient": self.coefficient}


@dataclass(frozen=True, eq=False)
class TableMotion(Motion):
    table: TableFunction = None
    kind = "table"

    def A(self, r):
        return self.table(r)

    def to_dict(self):
        return {"kind": self.kind, "r": self.table.r.tolist(), "A": self.table.values.tolist()}


class ChartDiffusion(Coefficient):
    """a(z) of the line generator obtained from a radial A(r) Laplacian through z = 1/r - r"""
    kind = "chart_a"

    def __init__(self, motion: Motion, d: float):
        self.motion = motion
        self.d = float(d)

    def __call__(self, z):
        r = chart_radius(z)
        P = self.motion.A(r)
        with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
            return 2.0 * P * np.square(1.0 + 1.0 / (r * r))

    def to_dict(self):
        return {"kind": self.kind, "motion": self.motion.to_dict(), "d": self.d}


class ChartDrift(Coefficient):
    """b(z) of the same change of variables"""
    kind = "chart_b"

    def __init__(self, motion: Motion, d: float):
        self.motion = motion
        self.d = float(d)

    def __call__(self, z):
        r = chart_radius(z)
        P = self.motion.A(r)
        with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
            Q = P * (self.d - 1.0) / r
            return 2.0 * P / r ** 3 - Q * (1.0 + 1.0 / (r * r))

    def to_dict(self):
        return {"kind": self.kind, "motion": self.motion.to_dict(), "d": self.d}


@dataclass(frozen=True, eq=False)
class LineGenerator(Motion):
    """1/2 a(z) u'' + b(z) u' on the whole line"""
    a: Coefficient = None
    b: Coefficient = None
    source_d: Optional[float] = None
    kind = "line"
    line = True

    def to_dict(self):
        spec = {"kind": self.kind, "a": self.a.to_dict(), "b": self.b.to_dict()}
        if self.source_d is not None:
            spec["source_d"] = self.source_d
        return spec

    def source_motion(self) -> Optional[Motion]:
        if isinstance(self.a, ChartDiffusion):
            return self.a.motion
        return None


# --- domains -----------------------------------------------------------------

@dataclass(frozen=True)
class FullSpace:
    kind = "full"

    def contains(self, r):
        return np.ones(np.shape(r), dtype=bool)

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class Punctured:
    kind = "punctured"

    def contains(self, r):
        return np.asarray(r) > 0

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class Ball:
    R: float = 1.0
    kind = "ball"

    def contains(self, r):
        return np.asarray(r) < self.R

    def to_dict(self):
        return {"kind": self.kind, "R": self.R}


@dataclass(frozen=True)
class Annulus:
    eps: float = 0.1
    R: float = 1.0
    kind = "annulus"

    def contains(self, r):
        r = np.asarray(r)
        return (r > self.eps) & (r < self.R)

    def to_dict(self):
        return {"kind": self.kind, "eps": self.eps, "R": self.R}


@dataclass(frozen=True, eq=False)
class ModelConfig:
    d: float = 3
    p: float = 2.0
    motion: Motion = field(default_factory=RadialPower)
    alpha: Coefficient = field(default_factory=lambda: Constant(1.0))
    beta: Coefficient = field(default_factory=lambda: Constant(0.0))
    domain: Any = field(default_factory=FullSpace)
    horizon: float = 1.0

    def replace(self, **changes) -> "ModelConfig":
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "d": self.d,
            "p": self.p,
            "motion": self.motion.to_dict(),
            "alpha": self.alpha.to_dict(),
            "beta": self.beta.to_dict(),
            "domain": self.domain.to_dict(),
            "horizon": self.horizon,
        }

    def __repr__(self):
        return (f"ModelConfig(d={self.d}, p={self.p}, motion={self.motion!r}, alpha={self.alpha!r}, "
                f"beta={self.beta!r}, domain={self.domain!r}, T={self.horizon})")


def config_hash(config: ModelConfig) -> str:
    """first 12 hex digits of sha256 over the canonical json of the config"""
    text = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


# --- (de)serialization ---------------------------------------------------------

def coefficient_from_dict(spec) -> Coefficient:
    if isinstance(spec, (int, float)):
        return Constant(spec)
    if isinstance(spec, Coefficient):
        return spec
    kind = spec.get("kind")
    if kind == "constant":
        return Constant(spec["c"])
    if kind == "power_law":
        return PowerLaw(spec["c"], spec["q"])
    if kind == "stretched_exp":
        return StretchedExp(spec["C1"], spec["C2"], spec["s"])
    if kind == "inverse_square":
        return InverseSquareAt0(spec["kappa0"])
    if kind == "neg_power":
        return NegPower(spec["C"], spec["q"])
    if kind == "sum":
        return Sum([coefficient_from_dict(t) for t in spec["terms"]])
    if kind == "table":
        return TableFunction(spec["r"], spec["values"])
    if kind == "pull_back":
        return PullBack(coefficient_from_dict(spec["base"]))
    if kind == "chart_a":
        return ChartDiffusion(motion_from_dict(spec["motion"]), spec["d"])
    if kind == "chart_b":
        return ChartDrift(motion_from_dict(spec["motion"]), spec["d"])
    raise ConfigError(f"unknown coefficient kind {kind!r}")


def motion_from_dict(spec) -> Motion:
    if isinstance(spec, Motion):
        return spec
    kind = spec.get("kind", "radial_power")
    if kind == "radial_power":
        return RadialPower(
            m=float(spec.get("m", 0.0)),
            C0=float(spec.get("C0", 1.0)),
            coefficient=float(spec.get("coefficient", 1.0)),
        )
    if kind == "table":
        return TableMotion(TableFunction(spec["r"], spec["A"]))
    if kind == "line":
        return LineGenerator(
            a=coefficient_from_dict(spec["a"]),
            b=coefficient_from_dict(spec["b"]),
            source_d=spec.get("source_d"),
        )
    raise ConfigError(f"unknown motion kind {kind!r}")


def domain_from_dict(spec):
    if spec is None:
        return FullSpace()
    kind = spec.get("kind", "full")
    if kind == "full":
        return FullSpace()
    if kind == "punctured":
        return Punctured()
    if kind == "ball":
        return Ball(float(spec["R"]))
    if kind == "annulus":
        return Annulus(float(spec["eps"]), float(spec["R"]))
    raise BadDomain(f"unknown domain kind {kind!r}")


def config_from_dict(spec: Dict[str, Any]) -> ModelConfig:
    """builds a ModelConfig from the [model] section of a settings or plan file"""
    return ModelConfig(
        d=spec.get("d", 3),
        p=float(spec.get("p", 2.0)),
        motion=motion_from_dict(spec.get("motion", {"kind": "radial_power"})),
        alpha=coefficient_from_dict(spec.get("alpha", 1.0)),
        beta=coefficient_from_dict(spec.get("beta", 0.0)),
        domain=domain_from_dict(spec.get("domain")),
        horizon=float(spec.get("horizon", 1.0)),
    )


# --- coefficient set -------------------------------------------------------------

@dataclass(eq=False)
class CoefficientSet:
    """evaluators of one configuration plus bounds cached on the validation grid"""
    config: ModelConfig
    grid: np.ndarray
    bounds: Dict[str, Tuple[float, float]]

    @property
    def line(self) -> bool:
        return self.config.motion.line

    def A(self, r):
        motion = self.config.motion
        if motion.line:
            return 0.5 * motion.a(r)
        return motion.A(r)

    def alpha(self, r):
        return self.config.alpha(r)

    def beta(self, r):
        return self.config.beta(r)

    def drift(self, r):
        """radial drift A(r)(d-1)/r induced by A(r) Laplacian (b(z) on the line)"""
        motion = self.config.motion
        if motion.line:
            return motion.b(r)
        r = np.asarray(r, dtype=float)
        if self.config.d == 1:
            return np.zeros(np.shape(r))
        with np.errstate(divide='ignore', invalid='ignore'):
            return self.A(r) * (self.config.d - 1.0) / r

    # generator written as P u'' + Q u'
    P = A
    Q = drift


def _range(values: np.ndarray) -> Tuple[float, float]:
    if values.size == 0:
        return float("nan"), float("nan")
    return float(np.nanmin(values)), float(np.nanmax(values))


def _findings(config: ModelConfig) -> List[Tuple[type, str]]:
    """every violated standing assumption as (error class, message)"""
    found: List[Tuple[type, str]] = []
    motion = config.motion
    domain = config.domain

    if not config.p > 1:
        found.append((ConfigError, "p must exceed 1"))
    if not config.d >= 1:
        found.append((ConfigError, "dimension must be at least 1"))
    if not config.horizon > 0:
        found.append((ConfigError, "horizon must be positive"))

    if isinstance(domain, Ball) and not domain.R > 0:
        found.append((BadDomain, "ball radius must be positive"))
    if isinstance(domain, Annulus) and not (0 < domain.eps < domain.R):
        found.append((BadDomain, "annulus needs 0 < eps < R"))
    if motion.line and not isinstance(domain, FullSpace):
        found.append((BadDomain, "line generators live on the whole line"))
    if isinstance(domain, (Punctured, Annulus)) and config.d < 2 and not motion.line:
        found.append((BadDomain, "punctured domains need d >= 2"))

    if isinstance(motion, RadialPower):
        if not np.isfinite(motion.m):
            found.append((ConfigError, "radial power m must be finite"))
        if not (motion.C0 >= 1 and 1.0 / motion.C0 <= motion.coefficient <= motion.C0):
            found.append((ConfigError, "coefficient outside the C0 envelope"))

    grid = validation_grid(domain, line=motion.line)
    if motion.line:
        diffusion = 0.5 * motion.a(grid)
    else:
        diffusion = motion.A(grid)
    if np.any(~(diffusion > 0)):
        found.append((ConfigError, "diffusion coefficient not elliptic on the domain"))

    positive = config.alpha.positive()
    if positive is False:
        found.append((NonPositiveAlpha, "alpha must be positive"))
    elif positive is None:
        values = config.alpha(grid)
        if np.any(~(values > 0)):
            found.append((NonPositiveAlpha, "alpha must be positive"))

    if not numerically_bounded_above(config.beta(grid), grid):
        found.append((UnboundedBeta, "beta unbounded above"))
    return found


@dataclass
class ValidationReport:
    violations: List[str] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __repr__(self):
        return f"ValidationReport(violations={self.violations}, flags={self.flags})"


def validate_config(config: ModelConfig) -> ValidationReport:
    """lists every violated standing assumption; never raises"""
    report = ValidationReport()
    try:
        report.violations = [message for _, message in _findings(config)]
    except (SupcritError, ValueError, TypeError) as error:
        report.violations.append(f"configuration not evaluable: {error}")

    if config.p > 2:
        report.flags.append("particle module unavailable, PDE classifiers allowed")
    if float(config.d) != int(config.d):
        report.flags.append("particle module requires integer dimension")
    return report


def build_coefficients(config: ModelConfig) -> CoefficientSet:
    """
    :param config: model configuration
    :return: evaluators plus (inf, sup) of A, alpha and beta over the validation grid
    """
    found = _findings(config)
    if found:
        error_class, message = found[0]
        raise error_class(message)

    grid = validation_grid(config.domain, line=config.motion.line)
    coeffs = CoefficientSet(config=config, grid=grid, bounds={})
    with np.errstate(all='ignore'):
        coeffs.bounds = {
            "A": _range(np.asarray(coeffs.A(grid), dtype=float)),
            "alpha": _range(np.asarray(coeffs.alpha(grid), dtype=float)),
            "beta": _range(np.asarray(coeffs.beta(grid), dtype=float)),
        }
    logger.debug(f"coefficients built for {config!r}: {coeffs.bounds}")
    return coeffs
