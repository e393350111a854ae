"""Exception hierarchy shared by all modules."""

__all__ = [
    "GravjetError", "ParamError", "FluxTooSmall", "GeometryOrderViolation", "NonPositive",
    "DomainError", "ParameterBelowMinimum", "NormalizationError", "CrossingWalls",
    "TruncationTooSmall", "ResolutionTooCoarse", "ExtractionError", "NonGraph", "EmptyBoundary",
    "WindowEmpty", "SolverError", "NotConverged", "FitError", "NoBracket", "BudgetExhausted",
    "ConfigError", "ParseError", "ValidationError",
]


class GravjetError(Exception):
    """Base class for every error raised by this package."""


class ParamError(GravjetError, ValueError):
    """Physical or geometric input is invalid."""


class FluxTooSmall(ParamError):
    pass


class GeometryOrderViolation(ParamError):
    pass


class NonPositive(ParamError):
    pass


class DomainError(ParamError):
    pass


class ParameterBelowMinimum(ParamError):
    pass


class NormalizationError(ParamError):
    pass


class CrossingWalls(ParamError):
    pass


class TruncationTooSmall(ParamError):
    pass


class ResolutionTooCoarse(ParamError):
    pass


class ExtractionError(GravjetError):
    """Free-boundary or interface extraction failed."""


class NonGraph(ExtractionError):
    def __init__(self, msg, rows=()):
        super().__init__(msg)
        self.rows = tuple(rows)


class EmptyBoundary(ExtractionError):
    def __init__(self, msg, which=None):
        super().__init__(msg)
        self.which = which


class WindowEmpty(ExtractionError):
    pass


class SolverError(GravjetError):
    pass


class NotConverged(SolverError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics


class FitError(GravjetError):
    pass


class NoBracket(FitError):
    pass


class BudgetExhausted(FitError):
    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


class ConfigError(GravjetError):
    pass


class ParseError(ConfigError):
    def __init__(self, msg, line=None, pos=None):
        where = "" if line is None else f" (line {line}" + ("" if pos is None else f", col {pos}") + ")"
        super().__init__(msg + where)
        self.line = line
        self.pos = pos


class ValidationError(ConfigError):
    def __init__(self, field, msg):
        super().__init__(f"{field}: {msg}")
        self.field = field
