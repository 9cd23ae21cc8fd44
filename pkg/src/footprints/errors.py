"""Shared exception types."""


class ConfigurationError(ValueError):
    """Raised when user-supplied configuration violates a documented precondition."""


class ContractViolation(ValueError):
    """Raised when an internal call contract is broken (bad shapes, duplicate keys, ...)."""
