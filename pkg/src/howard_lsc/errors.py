"""Exception types raised by the solver library."""


class HowardError(Exception):
    """Base class for domain failures."""


class ModelParseError(HowardError):
    """The model source is not valid JSON."""


class ModelSchemaError(HowardError):
    """The JSON is well formed but a field is missing or has the wrong type."""


class ModelValidationError(HowardError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class CertificateError(HowardError):
    """The growth certificate fails (gamma >= 1)."""


class ConvergenceError(HowardError):
    """An iterative method hit its iteration cap."""


class SingularSystemError(HowardError):
    """Policy evaluation produced a singular or non-finite linear system."""
