"""Exception types shared across the package.

Each maps to one failure vocabulary word used in the docstrings:
shape, domain, bounds, config, format, memory fault, dispatch.
"""


class VecBoostError(Exception):
    """Base class for all package errors."""


class ShapeError(VecBoostError, ValueError):
    """Tensor or buffer dimensions do not satisfy an operation's contract."""


class DomainError(VecBoostError, ValueError):
    """A value is outside the mathematical domain of an operation."""


class BoundsError(VecBoostError, IndexError):
    """An index is outside the addressed tensor or buffer."""


class ConfigError(VecBoostError, ValueError):
    """A configuration value or combination is invalid."""


class FormatError(VecBoostError, ValueError):
    """A serialized file is malformed or truncated."""


class MemoryFault(VecBoostError, RuntimeError):
    """A simulated access fell outside every registered buffer."""


class DispatchError(VecBoostError, ValueError):
    """A vector fetch referenced an unknown or unusable kernel program."""
