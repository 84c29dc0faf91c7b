"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ToolkitError):
    """Matrix or vector dimensions are mutually inconsistent."""


class GridError(ToolkitError):
    """A time grid or grid alignment requirement is violated."""


class RiccatiError(ToolkitError):
    """The algebraic Riccati equation has no stabilizing solution."""


class SolverError(ToolkitError):
    """A linear-quadratic solve failed or produced an invalid result."""


class NonConvergenceError(SolverError):
    """An iterative solver exhausted its iteration budget."""


class ConfigError(ToolkitError):
    """Invalid run configuration (CLI options, file schema, mode setup)."""
