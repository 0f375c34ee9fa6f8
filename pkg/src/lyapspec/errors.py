"""Exception hierarchy. Every error carries a short machine-readable code."""


class LyapspecError(Exception):
    code = "ERROR"

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def one_line(self):
        msg = " ".join(str(self).split())
        return f"{self.code}: {msg}"


class ModelError(LyapspecError):
    code = "MODEL_INVALID"


class CrossModelError(LyapspecError):
    code = "CROSS_MODEL"


class WindowExhausted(LyapspecError):
    code = "WINDOW_EXHAUSTED"

    def __init__(self, message, required_width):
        super().__init__(message, required_width=required_width)
        self.required_width = required_width


class IntegratorError(LyapspecError):
    code = "INTEGRATOR_TOLERANCE"


class ConjugatePointError(LyapspecError):
    code = "CONJUGATE_POINT"

    def __init__(self, message, crossing_time):
        super().__init__(message, crossing_time=crossing_time)
        self.crossing_time = crossing_time


class PreconditionError(LyapspecError):
    code = "PRECONDITION"


class CycleCapError(LyapspecError):
    code = "CYCLE_CAP"


class EstimatorError(LyapspecError):
    code = "ESTIMATOR"


class BracketError(LyapspecError):
    code = "BRACKET_FAILURE"


class ConvexityError(LyapspecError):
    code = "NONCONVEX"


class ShadowingError(LyapspecError):
    code = "SHADOWING"


class CodingError(LyapspecError):
    code = "CODING"


class ConfigError(LyapspecError):
    code = "CONFIG"


class UsageError(LyapspecError):
    code = "USAGE"
