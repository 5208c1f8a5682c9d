"""Exception types shared by the library and the command line."""


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


class NumericalFailure(RuntimeError):
    """A computation could not reach its accuracy or bracketing target."""


class PreconditionRefusal(RuntimeError):
    """An operation was asked to run where its mathematical precondition fails."""


class EvennessError(ValueError):
    """Input that must be even on the sphere has a significant odd part."""
