"""Exception hierarchy shared by every depthkit module."""


class DepthKitError(Exception):
    """Base class for all library errors."""


class DimensionError(DepthKitError, ValueError):
    """Shapes disagree or a rectangle falls outside its image."""


class DomainError(DepthKitError, ValueError):
    """A value lies outside the domain of the requested function."""


class EmptyMaskError(DepthKitError, ValueError):
    """A masked reduction was asked to run over zero pixels."""


class InsufficientDataError(DepthKitError, ValueError):
    pass


class DegenerateGeometryError(DepthKitError, ValueError):
    pass


class CapacityError(DepthKitError, ValueError):
    pass


class EncodingError(DepthKitError, ValueError):
    """Malformed one-hot target."""


class FormatError(DepthKitError, ValueError):
    """File exists but does not follow the expected PNG layout."""


class RangeError(DepthKitError, ValueError):
    pass


class ParseError(DepthKitError, ValueError):
    pass
