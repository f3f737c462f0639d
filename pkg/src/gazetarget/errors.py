"""Exception types raised across the package."""


class GazeError(Exception):
    """Base class for all package errors."""


# imaging
class MalformedHeader(GazeError):
    pass


class TruncatedPixelData(GazeError):
    pass


class UnsupportedMaxval(GazeError):
    pass


class UnsupportedGlyph(GazeError):
    pass


class UnrecognizedGlyph(GazeError):
    pass


class RegionOutOfBounds(GazeError):
    pass


# geometry / layout
class EmptyLayout(GazeError):
    pass


class NoCellsFound(GazeError):
    pass


class CalibrationMismatch(GazeError):
    pass


class TooManyParticipants(GazeError):
    pass


class LengthMismatch(GazeError):
    pass


# facedet
class NoIntersection(GazeError):
    pass


class MalformedRow(GazeError):
    pass


# nn
class ShapeMismatch(GazeError):
    pass


class BadMagic(GazeError):
    pass


class VersionMismatch(GazeError):
    pass


class TruncatedParams(GazeError):
    pass


class EmptyDataset(GazeError):
    pass


# dataset / eval
class EmptySplit(GazeError):
    pass


class HeadOutOfFrame(GazeError):
    pass


class EmptyInput(GazeError):
    pass


# runtime
class BindFailure(GazeError):
    pass


class NonWritable(GazeError):
    pass


class ConfigError(GazeError):
    pass


class DiskFull(GazeError):
    pass


class SequenceExists(GazeError):
    """Output directory already holds a frame sequence and append was not requested."""
