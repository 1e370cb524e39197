"""Exception types shared across the package."""


class RobustMechError(Exception):
    pass


class NumericalBreakdown(RobustMechError):
    def __init__(self, message, instance_hash=None):
        super().__init__(message if instance_hash is None else f"{message} (instance {instance_hash})")
        self.instance_hash = instance_hash


class ShapeMismatch(RobustMechError, ValueError):
    pass


class DimMismatch(RobustMechError, ValueError):
    pass


class InvalidEpsilon(RobustMechError, ValueError):
    pass


class EmptyConditioning(RobustMechError, ValueError):
    pass


class InvalidDistribution(RobustMechError, ValueError):
    pass


class DimensionTooLarge(RobustMechError, ValueError):
    pass


class UnsupportedType(RobustMechError, KeyError):
    pass


class InstanceTooLarge(RobustMechError, ValueError):
    pass


class LpInfeasible(RobustMechError):
    pass


class BaseMechanismNotIR(RobustMechError, ValueError):
    pass


class MultiBidderUnsupported(RobustMechError, ValueError):
    pass


class EmptySamples(RobustMechError, ValueError):
    pass


class TooLarge(RobustMechError, ValueError):
    pass


class AlphabetViolation(RobustMechError, ValueError):
    pass


class StructureMismatch(RobustMechError, ValueError):
    pass


class EmptyCandidates(RobustMechError, ValueError):
    pass


class ConfigError(RobustMechError, ValueError):
    pass
