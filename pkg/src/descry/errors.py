"""Exception hierarchy shared by all descry modules.

Two branches matter for CLI exit codes: ``DataError`` (malformed or
inconsistent input, exit 2) and ``IoFailure`` (filesystem trouble, exit 3).
"""

from __future__ import annotations


class DescryError(Exception):
    """Base class for every error raised by this package."""


class DataError(DescryError):
    """Input was readable but violates a structural or semantic contract."""


class IoFailure(DescryError):
    """A file could not be read or written."""


# -- dataset ingestion -------------------------------------------------------

class MalformedFileError(DataError):
    """File content does not parse into the expected structure."""


class DanglingReferenceError(DataError):
    """A record points at an image or category that does not exist."""


class DegenerateBoxError(DataError):
    """A bounding box has no area, before or after clamping to the image."""


# -- embedding stores ---------------------------------------------------------

class BadMagicError(DataError):
    """File does not start with the embedding-store magic bytes."""


class TruncatedFileError(DataError):
    """File ends before the declared record payload is complete."""


class DuplicateKeyError(DataError):
    """Two records in one store share a key."""


class DimensionMismatchError(DataError):
    """Vectors that must share a dimension do not."""


class NotNormalizedError(DataError):
    """A vector flagged as unit-length is not, beyond tolerance."""


# -- describability profiling -------------------------------------------------

class EmptyCollectionError(DataError):
    """An operation over a dataset collection received no datasets."""


class MissingEmbeddingError(DataError):
    """An expected key is absent from an embedding store."""


class EmptyDatasetError(DataError):
    """A dataset has no evaluable annotations."""


class SizeMismatchError(DataError):
    """Requested partition sizes do not add up to the collection size."""


# -- episodes and evaluation ---------------------------------------------------

class ForeignEpisodeError(DataError):
    """An episode is paired with a dataset it was not sampled from."""


class ZeroGroundTruthError(DataError):
    """Evaluation was requested on a dataset with no ground-truth boxes."""


# -- reporting ------------------------------------------------------------------

class MissingCellError(DataError):
    """A (method, k, seed, dataset) AP value required for aggregation is absent."""


class DivisionByZeroMeanError(DataError):
    """A ratio denominator aggregate mean is zero."""
