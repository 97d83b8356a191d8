"""Exception types shared across the pipeline.

Everything raised for bad *data* (as opposed to bad arguments or I/O
failures) derives from :class:`SecimgError`, so callers can tally and skip
per-sample failures without masking programming errors.
"""


class SecimgError(Exception):
    """Base class for data and format errors raised by this package."""


class MalformedPE(SecimgError):
    """Input is not a loadable PE image (bad magic, truncated or out-of-bounds headers)."""


class MalformedBytesLine(SecimgError):
    """A line of a ``.bytes`` hex dump could not be decoded."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class AsmBufferMismatch(SecimgError):
    """The ``.asm`` listing does not describe the paired ``.bytes`` content."""


class InvalidSize(SecimgError):
    """A width scheme was asked about an empty file."""


class MalformedTensorFile(SecimgError):
    """An MSIT container failed its header or payload-length checks."""


class EmptyDataset(SecimgError):
    """No usable samples were found while building a manifest."""


class DuplicateSampleId(SecimgError):
    """Two samples resolved to the same id."""


class UnlabeledSample(SecimgError):
    """An operation requiring labels met an unlabeled manifest entry."""


class DimensionMismatch(SecimgError):
    """Predictions and labels disagree on sample count or class count."""


class IdMismatch(SecimgError):
    """Prediction ids and label ids are not the same sequence."""


class HeterogeneousChannels(SecimgError):
    """Channel stacks with differing channel counts were mixed."""


class ShapeMismatch(SecimgError):
    """A query stack does not match the fitted model's feature shape."""
