"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument is outside its documented domain."""


class DegenerateInputError(ValueError):
    """Input data cannot support the requested operation (e.g. constant map)."""


class SemanticsError(ValueError):
    """An object with the wrong semantics tag or grid was passed to an operation."""


class ProviderError(RuntimeError):
    """A disparity-provider directory violates the interchange contract."""
