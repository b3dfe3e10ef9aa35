"""
Exception hierarchy shared by the computational modules and the CLI
"""


class CatArrayError(Exception):
    """Base class for every error raised by the library"""


class DimensionError(CatArrayError, ValueError):
    """Shapes or truncations do not match"""


class ParameterError(CatArrayError, ValueError):
    """Physical parameters outside their allowed range"""


class ZenoAssumptionError(CatArrayError, ZeroDivisionError):
    """Zeno reduction requested without strong non-local dissipation"""


class DegenerateManifoldError(CatArrayError, ValueError):
    """The odd cat state does not exist at zero amplitude"""


class PhysicalityError(CatArrayError):
    """A matrix failed the density-matrix checks"""

    def __init__(self, message: str, report: dict = None):
        super().__init__(message)
        self.report = report or {}


class ConvergenceError(CatArrayError):
    """Eigensolver did not converge"""

    def __init__(self, message: str, diagnostics: dict = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class IntegrationError(CatArrayError):
    """Time propagation failed or drifted off the trace-one surface"""

    def __init__(self, message: str, diagnostics: dict = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(CatArrayError, ValueError):
    """Run configuration failed validation"""

    def __init__(self, message: str, fields: dict = None):
        super().__init__(message)
        self.fields = fields or {}


class TruncationWarning(UserWarning):
    """State or displacement is too large for the retained Fock levels"""
