"""Exception hierarchy shared by the estimation and placing modules."""


class PlacingError(Exception):
    """Base class for domain errors (mapped to exit code 3 by the CLI)."""


class DegenerateRotationError(PlacingError):
    """A 6D parameterization cannot be orthonormalized."""


class EmptyContactError(PlacingError):
    """The object footprint misses the taxel array."""


class NoLineFoundError(PlacingError):
    """Too few active taxels to fit a line."""


class DegenerateAxisError(PlacingError):
    """The weighted covariance is isotropic, so no principal axis exists."""


class FingerprintMismatchError(PlacingError):
    """A checkpoint was written for a different architecture."""


class TrainingDiverged(PlacingError):
    def __init__(self, epoch, batch, loss):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
