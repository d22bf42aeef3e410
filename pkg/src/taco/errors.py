"""Exception hierarchy shared by every taco module."""


class TacoError(Exception):
    """Base class for all errors raised by this package."""


# tactile data
class UnreadableFile(TacoError, OSError):
    pass


class UnsupportedFormat(TacoError, ValueError):
    pass


class NonThreeChannelImage(TacoError, ValueError):
    pass


class InconsistentTaxelCount(TacoError, ValueError):
    pass


class EmptySequence(TacoError, ValueError):
    pass


class WrongSensorKind(TacoError, ValueError):
    pass


class TooFewTrajectories(TacoError, ValueError):
    pass


class TargetSmallerThanSource(TacoError, ValueError):
    pass


# tokenizer
class LengthGeometryMismatch(TacoError, ValueError):
    pass


# bitstreams
class TruncatedBitstream(TacoError, ValueError):
    pass


class CountMismatch(TacoError, ValueError):
    pass


class CorruptBitstream(TacoError, ValueError):
    pass


class CorruptHeader(CorruptBitstream):
    pass


class CorruptPayload(CorruptBitstream):
    pass


class VersionMismatch(TacoError, ValueError):
    pass


# metrics
class EmptyInput(TacoError, ValueError):
    pass


class DimensionMismatch(TacoError, ValueError):
    pass


class TooSmallForAnyScale(TacoError, ValueError):
    pass


class InsufficientPoints(TacoError, ValueError):
    pass


class NoQualityOverlap(TacoError, ValueError):
    pass


class NonMonotoneCurve(TacoError, ValueError):
    pass


class NonPositiveInput(TacoError, ValueError):
    pass


class ZeroArea(TacoError, ValueError):
    pass


# bench
class ConfigError(TacoError, ValueError):
    pass


class UnknownCodec(ConfigError):
    pass


class MissingDataset(ConfigError):
    pass


class MalformedTemplate(ConfigError):
    pass


class ExternalCommandFailure(TacoError, RuntimeError):
    pass


class LosslessViolation(TacoError, RuntimeError):
    pass


class TooFewFrames(TacoError, ValueError):
    pass


class UnwritableOutput(TacoError, OSError):
    pass


# downstream
class EmptyTrainSet(TacoError, ValueError):
    pass


class SingularSystem(TacoError, ArithmeticError):
    pass


class UnlabeledManifest(TacoError, ValueError):
    pass
