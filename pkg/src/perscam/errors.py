"""Exception types raised by perscam."""


class PerscamError(ValueError):
    """Base class for all geometry and I/O errors in this package."""


class InvalidIntrinsicsError(PerscamError):
    pass


class InvalidBBoxError(PerscamError):
    pass


class InvalidCropError(PerscamError):
    pass


class InvalidRotationError(PerscamError):
    pass


class SingularHomographyError(PerscamError):
    pass


class BehindCameraError(PerscamError):
    pass


class SkeletonMismatchError(PerscamError):
    pass


class AlignmentDegenerateError(PerscamError):
    pass


class SceneError(PerscamError):
    """Raised when the synthetic scene cannot satisfy its framing constraints."""


class ManifestError(PerscamError):
    """Schema violation in a JSON or JSON-lines input; message carries file and line."""
