"""Exception types raised by the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class CapacityError(ValueError):
    """A requested size exceeds a hard capacity guard."""


class EmptySetError(ValueError):
    """An operation that needs a nonempty set received an empty one."""


class DegenerateFitError(ValueError):
    """A regression has no usable spread in its data."""


class PersistError(OSError):
    """Writing a report or table failed; the message names the path."""
