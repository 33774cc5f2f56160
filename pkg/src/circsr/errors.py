"""Exception hierarchy shared by all circsr modules."""


class CircsrError(Exception):
    """Base class for every error raised by this package."""


class FormatError(CircsrError, ValueError):
    """A file does not parse under its declared format (bad header, ragged rows)."""


class NonFiniteError(CircsrError, ValueError):
    """A signal, model or intermediate result contains NaN or Inf."""


class DimensionError(CircsrError, ValueError):
    """Array shapes or channel counts do not agree."""


class GeometryError(CircsrError, ValueError):
    """LR/SR lengths do not form a valid integer SR factor >= 2."""


class ParameterError(CircsrError, ValueError):
    """A scalar parameter is outside its documented range."""


class SingularSystemError(CircsrError, ValueError):
    """Normal equations are rank deficient and no ridge penalty regularizes them."""


class ExternalSRError(CircsrError, RuntimeError):
    """An external SR process could not be run or returned an invalid result."""
