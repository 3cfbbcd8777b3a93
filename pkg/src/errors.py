class SupcritError(Exception):
    pass


class ConfigError(SupcritError):
    """Thrown when a model configuration breaks a standing assumption"""
    pass


class NonPositiveAlpha(ConfigError):
    pass


class UnboundedBeta(ConfigError):
    pass


class BadDomain(ConfigError):
    pass


class DimensionTooSmall(ConfigError):
    pass


class UnboundedShift(SupcritError):
    pass


class HypothesisUnmet(SupcritError):
    pass


class GeneratorError(SupcritError):
    pass


class DegenerateGenerator(GeneratorError):
    pass


class QuadratureFailure(GeneratorError):
    pass


class StepSizeTooLarge(GeneratorError):
    pass


class SolverError(SupcritError):
    pass


class NonConvergence(SolverError):
    pass


class NegativeValue(SolverError):
    pass


class NoSaturation(SolverError):
    pass


class LadderTooCoarse(SolverError):
    pass


class GridError(SolverError):
    pass


class InvariantViolation(SolverError):
    pass


class BarrierError(SupcritError):
    pass


class NoValidParameters(BarrierError):
    pass


class ParticleError(SupcritError):
    pass


class InvalidLaw(ParticleError):
    pass


class StepRateTooLarge(ParticleError):
    pass


class PopulationExplosionCap(ParticleError):
    """
    raised when a run exceeds the particle hard cap.

    :param message: description of the overflow
    :param partial: whatever statistics were gathered before the abort
    """

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class PlanError(SupcritError):
    pass


class MissingArtifacts(SupcritError):
    pass
