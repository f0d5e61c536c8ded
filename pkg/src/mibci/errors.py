"""Exception hierarchy.

Three families map onto CLI exit codes: validation problems (2), numerical
failures during fitting (3) and model/data incompatibilities (4).
"""

from __future__ import annotations


class MibciError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 2


class ValidationError(MibciError, ValueError):
    exit_code = 2


class NumericalError(MibciError, ArithmeticError):
    exit_code = 3


class IncompatibleError(MibciError):
    exit_code = 4


# dataset
class MalformedHeader(ValidationError):
    pass


class SampleSizeMismatch(ValidationError):
    pass


class NonFiniteSample(ValidationError):
    pass


class WindowOutOfRange(ValidationError):
    pass


class InvalidSpec(ValidationError):
    pass


class DegenerateSplit(ValidationError):
    pass


class InvalidLabel(ValidationError):
    pass


# dsp
class InvalidBand(ValidationError):
    pass


class UnsupportedOrder(ValidationError):
    pass


class SignalTooShort(ValidationError):
    pass


class SegmentTooLong(SignalTooShort):
    pass


class EmptyBand(ValidationError):
    pass


# ica / features / classifiers
class SingularCovariance(NumericalError):
    pass


class LengthMismatch(ValidationError):
    pass


class IndexOutOfRange(ValidationError):
    pass


class MissingChannel(ValidationError):
    pass


class SingleClass(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class TooFewRows(ValidationError):
    pass


class NonFiniteLoss(NumericalError):
    pass


# pipeline
class EmptySection(ValidationError):
    pass


class UnknownSubjectLabel(IncompatibleError):
    pass


class FeatureMismatch(IncompatibleError):
    """A serialized model was trained against a different feature layout."""


class ConfigError(ValidationError):
    pass


# warnings
class NoConvergence(RuntimeWarning):
    """FastICA hit ``max_iter`` before reaching ``tol``."""


class RankTooLow(RuntimeWarning):
    """More principal components were requested than the data rank supports."""
