"""Exception hierarchy shared across the package."""


class XaiClipError(Exception):
    """Base class for all package errors."""


class ValidationError(XaiClipError, ValueError):
    """Input data violates a type invariant."""


class DimensionMismatchError(ValidationError):
    pass


class OutOfRangeError(ValidationError):
    pass


class NoForegroundError(XaiClipError):
    """Every pixel is below the background threshold."""


class TileTooLargeError(XaiClipError):
    """CLAHE tile grid does not fit inside the image."""


class DegenerateImportanceError(XaiClipError):
    """Constant importance map cannot be thresholded."""


class SingularFitError(XaiClipError):
    """Surrogate normal equations are singular."""


class PredictorError(XaiClipError):
    """Base class for predictor failures."""


class TransportError(PredictorError):
    """Could not reach the external predictor endpoint."""


class ProtocolError(PredictorError):
    """External predictor returned a malformed or incompatible response."""


class EngineError(XaiClipError):
    """Engine run aborted; carries the partial report when available."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
