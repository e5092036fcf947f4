class BamaError(Exception):
    pass


class ConfigError(BamaError, ValueError):
    """Invalid configuration or observation."""


class SolverError(BamaError, RuntimeError):
    """Numerical failure inside the stopping-value solver."""


class InfeasibleError(BamaError, ValueError):
    """A requested target cannot be reached by any parameter value."""
