"""Exception types shared across the package."""


class FvgmError(Exception):
    """Base class for all package errors."""


class InputError(FvgmError):
    """Malformed or inconsistent user input (files, schemas, arguments)."""


class StructureError(FvgmError):
    """Invalid graph structure, e.g. a cycle or a forbidden edge."""


class OrderingError(FvgmError):
    """Variable ordering violates a solver precondition."""


class ResourceLimitError(FvgmError):
    """A configured resource budget would be exceeded."""
