"""Exception types raised by the pipeline.

Every failure mode a caller is expected to handle gets its own class under
``DistillsegError`` so the CLI can map domain errors to exit code 1 while
programming errors propagate normally.
"""


class DistillsegError(Exception):
    """Base class for all recoverable pipeline errors."""


# -- corpus / raster IO -------------------------------------------------------

class MissingFile(DistillsegError):
    """A referenced image or mask file does not exist."""


class DimensionMismatch(DistillsegError):
    """A mask's dimensions differ from its owning image."""


class DuplicateId(DistillsegError):
    """The same sample id appears more than once in a manifest."""


class UnsupportedFormat(DistillsegError):
    """Raster file is not an accepted lossless 8-bit format."""


class InvalidPixelValue(DistillsegError):
    """Mask raster contains values other than 0 and 255."""


class DecodeFailure(DistillsegError):
    """An image file could not be decoded."""


# -- encoder gateway ----------------------------------------------------------

class AdapterUnavailable(DistillsegError):
    """No foundation-model adapter is configured (or its weights are absent)."""


class ShapeError(DistillsegError):
    """Array dimensions violate an operation's precondition."""


class ShapeMismatch(ShapeError):
    """Two arrays that must share dimensions do not."""


class CorruptEntry(DistillsegError):
    """Embedding cache entry failed its checksum or framing check."""


# -- prompts ------------------------------------------------------------------

class InvalidPrompt(DistillsegError):
    """Prompt fields are inconsistent or out of image bounds."""


class EmptyMask(DistillsegError):
    """A ground-truth mask with no foreground pixels where one is required."""


class EmptyList(DistillsegError):
    """An operation requiring at least one element received none."""


class InvalidRle(DistillsegError):
    """Run-length string malformed or inconsistent with its declared size."""


# -- decoder / training -------------------------------------------------------

class InvalidConfig(DistillsegError):
    """Decoder or training configuration violates its invariants."""


class BudgetTooLarge(DistillsegError):
    """Requested annotation budget exceeds the available training ids."""


class MissingEmbedding(DistillsegError):
    """No cached or computable embedding for a training sample."""


class MissingAnnotation(DistillsegError):
    """A selected budget id has no annotation record to train on."""


class NonFiniteLoss(DistillsegError):
    """Training loss became NaN/Inf; carries the epoch index in its message."""


class MissingGroundTruth(DistillsegError):
    """Evaluation requested on a sample without a ground-truth mask."""


# -- annotation service -------------------------------------------------------

class UnknownSample(DistillsegError):
    """Sample id not present in the active manifest."""


class UnknownSession(DistillsegError):
    """Session id does not exist or has expired."""


class NoPendingProposals(DistillsegError):
    """Commit-by-index requested but the session has no pending proposals."""
