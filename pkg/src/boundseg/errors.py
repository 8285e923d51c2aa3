"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad input: shape mismatch, out-of-range label, malformed file, invalid config."""


class UndefinedMetricError(ValueError):
    """A metric or map is mathematically undefined for this input (e.g. Hausdorff on an empty mask)."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""
