"""Exception types raised by the ebcl services.

Every error derives from EBCLError and from the builtin it specializes, so
callers can catch either the domain type or e.g. a plain ValueError.
"""


class EBCLError(Exception):
    """Base class for all ebcl errors"""


class DomainError(EBCLError, ValueError):
    """Argument outside the domain of an operation (b < 2, k > b, x <= 0, ...)"""


class EnvelopeViolation(EBCLError, AssertionError):
    """Rejection sampler proposal density does not dominate the target"""

    def __init__(self, j: int, i: int, ratio: float):
        self.j = j
        self.i = i
        self.ratio = ratio
        super().__init__(
            f"Acceptance ratio {ratio:.6g} > 1 for j={j}, i={i}; "
            f"enlarge the envelope constant M"
        )


class MissingFieldError(EBCLError, ValueError):
    """A BlockPath functional needs a field that was not sampled"""


class FunctionalParseError(EBCLError, ValueError):
    """Functional text does not match the grammar"""

    def __init__(self, message: str, text: str, position: int):
        self.text = text
        self.position = position
        pointer = " " * position + "^"
        super().__init__(f"{message} at position {position}\n  {text}\n  {pointer}")


class MembershipError(EBCLError, ValueError):
    """Functional is outside the admissible class (some exponent >= 1/alpha)"""

    def __init__(self, zeta: float, alpha: float):
        self.zeta = zeta
        self.bound = 1.0 / alpha
        super().__init__(
            f"Exponent zeta={zeta:.6g} violates zeta < 1/alpha = {self.bound:.6g} "
            f"(alpha={alpha:.6g})"
        )


class WindowShrinkError(EBCLError, ValueError):
    """Requested event-log window does not contain the current one"""


class DepthCapExceeded(EBCLError, RuntimeError):
    """Backward genealogy walk passed the configured depth cap"""


class QuadratureError(EBCLError, RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance"""

    def __init__(self, what: str, achieved: float, requested: float):
        self.achieved = achieved
        self.requested = requested
        super().__init__(
            f"Quadrature for {what} reached error {achieved:.3g} "
            f"(requested {requested:.3g})"
        )


class CompensatorMismatch(EBCLError, ValueError):
    """Closed-form compensator disagrees with its quadrature cross-check"""


class TruncationBudgetError(EBCLError, ValueError):
    """Kernel tail mass beyond r_max exceeds the configured tolerance"""


class DimensionMismatch(EBCLError, ValueError):
    """Samples or frequency vectors have incompatible dimensions"""


class LogFormatError(EBCLError, ValueError):
    """Persisted event log has a wrong magic or unsupported version"""


class LogCorruptedError(EBCLError, ValueError):
    """Persisted event log is truncated or internally inconsistent"""


class OutOfWindowError(EBCLError, LookupError):
    """Query needs events outside the window of a frozen (replayed) log"""


class ConfigValidationError(EBCLError, ValueError):
    """Experiment configuration failed validation"""

    def __init__(self, errors: dict):
        self.errors = errors
        lines = [f"  {field}: {message}" for field, message in errors.items()]
        super().__init__("Invalid configuration:\n" + "\n".join(lines))
