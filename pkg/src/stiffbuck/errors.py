class StiffbuckError(Exception):
    """Base class for all package errors."""


class ModelError(StiffbuckError):
    """Malformed chain description or mismatched dimensions."""


class ParameterError(StiffbuckError, ValueError):
    """Physically invalid parameter (non-positive stiffness, bad section)."""


class DomainError(StiffbuckError, ValueError):
    """Argument outside the domain of a closed-form expression."""


class SingularStiffnessError(StiffbuckError):
    """Raised when a stiffness matrix must be inverted but is singular."""


class ConfigError(StiffbuckError):
    """Invalid configuration document (schema or invariant violation)."""


class NotConvergedError(StiffbuckError):
    """An operation needs a converged equilibrium state but got a failed one."""
