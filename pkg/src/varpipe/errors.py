"""Exception hierarchy shared across the package."""


class VarPipeError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(VarPipeError):
    """Invalid pipeline configuration (bad document, unknown key, bad value)."""


# --- ingestion ---------------------------------------------------------------

class MalformedHeaderError(VarPipeError):
    """A declared column is missing from the CSV header."""


class UnparseableTimestampError(VarPipeError):
    """A timestamp cell does not match the declared format."""


class DuplicateTimestampError(VarPipeError):
    """Two rows in one source share a timestamp."""


class ColumnCollisionError(VarPipeError):
    """Two sources declare the same column name."""


class EmptyRangeError(VarPipeError):
    """Alignment range is empty (start >= end)."""


class AllMissingColumnError(VarPipeError):
    """A retained column has no observed value to impute from."""


# --- frame operations ---------------------------------------------------------

class InsufficientLengthError(VarPipeError):
    """Series or frame too short for the requested operation."""


class AnchorMismatchError(VarPipeError):
    """Anchor rows do not match the differenced frame they should invert."""


class DegenerateSplitError(VarPipeError):
    """A train/test split leaves one side empty."""


class ShapeMismatchError(VarPipeError):
    """Two frames differ in index, columns or shape where identity is required."""


class NonContiguousError(VarPipeError):
    """Frame index has gaps where a complete hourly grid is required."""


class MissingColumnError(VarPipeError):
    """A named column is not present in the frame."""


# --- statistics and estimation ------------------------------------------------

class ConstantSeriesError(VarPipeError):
    """Series has zero variance."""


class SingularDesignError(VarPipeError):
    """Regression design matrix is rank deficient beyond tolerance."""


class ZeroResidualsError(VarPipeError):
    """Residual vector is identically zero."""


class ZeroVarianceError(VarPipeError):
    """Sample variance is zero."""


class InsufficientObservationsError(VarPipeError):
    """Not enough rows to identify the regression."""


class NotPositiveDefiniteError(VarPipeError):
    """Covariance matrix is not positive definite within tolerance."""


class BadPermutationError(VarPipeError):
    """Requested ordering is not a permutation of the model columns."""
