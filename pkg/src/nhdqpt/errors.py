"""Exception hierarchy.

Anything deriving from :class:`NumericalDomainError` means the inputs are
valid but the requested quantity does not exist there (gapless model,
critical time, metric window exceeded, ...). The CLI maps those to exit
code 2 and :class:`ConfigError` to exit code 1.
"""


class NHDQPTError(Exception):
    pass


class ParameterDomainError(NHDQPTError, ValueError):
    pass


class ConfigError(NHDQPTError, ValueError):
    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(self.issues))


class NumericalDomainError(NHDQPTError, ArithmeticError):
    pass


class GaplessError(NumericalDomainError):
    pass


class UnsupportedModelError(NumericalDomainError):
    pass


class DegenerateGeometryError(NumericalDomainError):
    pass


class InsufficientGridError(NumericalDomainError):
    pass


class UndefinedPhaseError(NumericalDomainError):
    pass


class CriticalTimeError(NumericalDomainError):
    pass


class EPDegeneracyError(NumericalDomainError):
    pass


class WindowExceededError(NumericalDomainError):
    def __init__(self, message, min_m0=None):
        self.min_m0 = min_m0
        super().__init__(message)


class SingularEvolutionError(NumericalDomainError):
    pass


class HermiticityError(NumericalDomainError):
    pass


class StepSizeError(NumericalDomainError):
    pass


class DegenerateTraceError(NumericalDomainError):
    pass
