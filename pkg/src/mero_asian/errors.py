"""Exception hierarchy shared by the numerical modules."""


class MeroError(Exception):
    """Base class for all numerical failures raised by the package."""

    kind = "error"


class PoleError(MeroError):
    kind = "pole"


class DomainError(MeroError, ValueError):
    kind = "domain"


class ConvergenceError(MeroError):
    kind = "convergence"


class BracketError(MeroError):
    kind = "bracket"


class ContinuationError(MeroError):
    kind = "continuation"


class SingularError(MeroError):
    kind = "singular"


class DegenerateError(MeroError):
    kind = "degenerate"


class ContourError(MeroError):
    kind = "contour"


class ModelError(MeroError, ValueError):
    kind = "model"


class SamplerError(MeroError):
    kind = "sampler"
