"""Exception hierarchy for the simulator."""


class EyeTwinError(Exception):
    """Base class for all simulator errors."""


class ValidationError(EyeTwinError):
    """An input violated a documented invariant or precondition."""


class BehindCameraError(EyeTwinError):
    """Point at or behind the camera plane; cannot be projected."""


class DegenerateCameraError(EyeTwinError):
    """Camera placed inside the scene geometry."""


class DegenerateSeriesError(EyeTwinError):
    """A correlation input series has zero variance."""


class InfinitePsnrError(EyeTwinError):
    """PSNR requested for two identical images."""


class IllConditionedFitError(EyeTwinError):
    """Normal equations singular or rank-deficient; try lambda > 0."""


class EstimationError(EyeTwinError):
    """Per-frame estimator failure; frames scoring this receive the 180 deg penalty."""


class NoPupilError(EstimationError):
    """No dark connected component found in the image."""


class DegeneratePredictionError(EstimationError):
    """Estimator produced a zero-length gaze vector."""


class ContaminatedSplitError(EyeTwinError):
    """Train and test identity sets overlap."""


class ConfigError(EyeTwinError):
    """Invalid configuration document."""

    def __init__(self, message, pointer=None):
        super().__init__(message)
        self.pointer = pointer
