"""Shared exception types, grouped by how the CLI maps them to exit codes."""


class ConfigurationError(ValueError):
    """Invalid scenario/parameter data (bad dimensions, out-of-range values, unknown keys)."""


class ContractViolationError(ValueError):
    """An operation was called outside its documented preconditions."""


class DegenerateGeometryError(RuntimeError):
    """The barrier input direction vanished (relative degree lost, no usable c2)."""


class SolverError(RuntimeError):
    """The filter solve failed to converge; carries diagnostics in the message."""


class IntegrationError(RuntimeError):
    """The closed-loop state left the finite range during integration."""


class SectorViolationError(RuntimeError):
    """A nonlinearity produced w with ||w|| > theta*||u||, breaking its own bound."""
