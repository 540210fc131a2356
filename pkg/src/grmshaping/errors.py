"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration or parameters."""


class CapacityError(ConfigError):
    """An exhaustive computation would exceed its configured size cap."""


class MatchingError(ValueError):
    """A matching function broke the fraction/settlement rules."""


class ContractViolation(RuntimeError):
    """A caller-supplied callback broke its contract (bad action, peeking IM, ...)."""
