"""Exception types shared across the laboratory modules."""


class LorentzLabError(Exception):
    """Base class for all laboratory errors."""


class OutOfWindow(LorentzLabError):
    """A point was requested outside the chart window bounds."""


class StepTooLarge(LorentzLabError):
    """Geodesic integration drifted beyond the norm-conservation budget."""


class NoConnection(LorentzLabError):
    """No causal geodesic between the endpoints was found from any start."""


class NotCausallyRelated(LorentzLabError):
    """The target point is not in the causal future of the source."""


class DiamondLeavesWindow(LorentzLabError):
    """The causal diamond of the endpoints is not contained in the window,
    so any computed separation would only be a lower bound."""


class SupportLeak(LorentzLabError):
    """A test density is nonzero too close to the window boundary for
    boundary terms to be dropped in integration by parts."""


class ConventionViolation(LorentzLabError):
    """N = dim requires an identically zero weight."""


class CollarTooThin(LorentzLabError):
    """The mollification radius exceeds the window collar."""


class ConeNarrowingFailed(LorentzLabError):
    """The corrected smooth metric still has causal vectors that are not
    timelike for the base metric."""


class NotInChronologicalPast(LorentzLabError):
    """Forward approximate Busemann evaluation outside I^-(gamma_t)."""


class NotInChronologicalFuture(LorentzLabError):
    """Backward approximate Busemann evaluation outside I^+(gamma_{-t})."""


class NotConverged(LorentzLabError):
    """A truncation schedule ended before the requested gap was reached."""

    def __init__(self, message, gap=None, trend=None):
        super().__init__(message)
        self.gap = gap
        self.trend = trend


class VelocitiesNotCauchy(LorentzLabError):
    """Co-ray initial velocities did not settle along the schedule."""

    def __init__(self, message, curves=None, velocities=None):
        super().__init__(message)
        self.curves = curves or []
        self.velocities = velocities or []


class DegenerateGradient(LorentzLabError):
    """The gradient norm left the ellipticity domain of the p-operator."""


class WrongCausalType(LorentzLabError):
    """A gradient had the wrong causal character for the calling context."""


class LevelSetNotGraph(LorentzLabError):
    """A level-set column was not monotone, so root-finding is ambiguous."""


class FlowLeavesWindow(LorentzLabError):
    """A gradient-flow line left the chart window."""


class StructureViolated(LorentzLabError):
    """The unit-gradient structure degraded along a flow line."""


class ConfigParse(LorentzLabError):
    """A scenario configuration could not be parsed or validated."""
