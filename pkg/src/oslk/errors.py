"""Exception types shared across the package."""


class OslkError(Exception):
    """Base class for package-specific failures."""


class InvalidInputError(OslkError, ValueError):
    """A caller passed values outside an operation's contract."""


class InfeasibleError(OslkError, ValueError):
    """A well-formed problem admits no feasible solution."""


class ConfigError(InvalidInputError):
    """Malformed configuration: unknown key, bad type, or bad value."""


class InternalCheckError(OslkError, RuntimeError):
    """An internal invariant failed; indicates a bug, not bad input."""
