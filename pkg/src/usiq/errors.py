"""Exception types shared across the package.

Every contract violation raises a subclass of :class:`UsiqError` carrying a
stable ``kind`` string so the CLI can report a machine-readable error kind on
stderr and exit with status 2.
"""


class UsiqError(Exception):
    """Base class for all contract errors raised by this package."""

    kind = "error"


class PgmError(UsiqError):
    """Base class for PGM reader/writer failures."""

    kind = "pgm-error"


class PgmFormatError(PgmError):
    """Magic number is not a supported PGM variant (P2/P5)."""

    kind = "unsupported-format"


class PgmHeaderError(PgmError):
    """Header is syntactically broken or carries out-of-range fields."""

    kind = "malformed-header"


class PgmDataError(PgmError):
    """Raster payload is shorter than the header promises."""

    kind = "truncated-data"


class InvalidImageError(UsiqError):
    """Pixel grid violates the image invariants (shape, finiteness)."""

    kind = "invalid-image"


class InvalidParamsError(UsiqError):
    """A parameter object violates its declared constraints."""

    kind = "invalid-params"


class DimensionMismatchError(UsiqError):
    """Two operands that must share a shape do not."""

    kind = "dimension-mismatch"


class ImageTooSmallError(UsiqError):
    """Image (or ROI) is smaller than the operation can decompose."""

    kind = "image-too-small"


class ConstantSeriesError(UsiqError):
    """Series normalization needs at least two distinct finite values."""

    kind = "constant-series"


class DegenerateReferenceError(UsiqError):
    """Reference image carries no information for the requested metric."""

    kind = "degenerate-reference"


class ZeroVarianceTemplateError(UsiqError):
    """Correlation template is flat, so matching is undefined."""

    kind = "zero-variance-template"


class EmptyHistogramError(UsiqError):
    """Kernel-weighted histogram collected no mass."""

    kind = "empty-histogram"


class OutOfFrameError(UsiqError):
    """A rendered primitive (or commanded motion) leaves the frame."""

    kind = "out-of-frame"


class CountMismatchError(UsiqError):
    """Two tracks that must pair frame-by-frame have different lengths."""

    kind = "count-mismatch"


class ManifestError(UsiqError):
    """Sequence manifest file violates the documented schema."""

    kind = "invalid-manifest"
