"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed external input (CSV rows, config files)."""


class DomainError(ValueError):
    """A value lies outside the domain the operation is defined on."""


class GridMismatchError(ValueError):
    """Two objects were built on different trait grids."""


class EmptyBinError(ValueError):
    """A bin-year has no observed plots on the side being requested."""


class ZeroIntensityError(ValueError):
    """A cell carries observed points but zero modelled intensity."""


class ConstraintError(ValueError):
    """A parameter state falls outside the identifiability region."""


class ConvergenceError(RuntimeError):
    """An iterative numerical routine failed to converge."""
