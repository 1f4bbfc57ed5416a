"""Exception types shared across the package."""

from __future__ import annotations


class SplitstreamError(Exception):
    """Base class for all errors raised by this package."""


class DesyncError(SplitstreamError):
    """The observed token cannot be explained by the current decode state.

    Raised when a decoded token id is absent from the distribution the
    decoder reconstructed for that step, which means encoder and decoder
    no longer agree on the sequence of distributions.
    """


class TruncationError(SplitstreamError):
    """The token stream ended before the whole message was embedded.

    Carries how many framed bits made it into the stream so callers can
    resume or report progress.
    """

    def __init__(self, message: str, embedded_bits: int, total_bits: int):
        super().__init__(message)
        self.embedded_bits = int(embedded_bits)
        self.total_bits = int(total_bits)


class IncompleteFrameError(SplitstreamError):
    """A decode consumed the whole stream without completing the frame.

    Happens on truncated streams and on wrong-key decodes, where the
    de-whitened length prefix is garbage and asks for more bits than the
    stream can ever deliver.
    """


class CorpusFormatError(SplitstreamError):
    """A corpus file is malformed (bad magic, version, or record layout)."""


class SourceError(SplitstreamError):
    """A logits source misbehaved (transport failure or inconsistent shape)."""
