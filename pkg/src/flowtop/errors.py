"""Exception types raised across the package."""


class FlowtopError(Exception):
    pass


class BeyondInjectivityRadius(FlowtopError):
    """Two points are too far apart for a unique minimizing geodesic."""

    def __init__(self, message="distance exceeds injectivity radius", index=None):
        super().__init__(message)
        self.index = index


class ProjectionIllConditioned(FlowtopError):
    pass


class HorizonExceeded(FlowtopError):
    pass


class ResolutionTooCoarse(FlowtopError):
    pass


class ConfigInvalid(FlowtopError):
    pass


class NoValidTime(FlowtopError):
    pass
