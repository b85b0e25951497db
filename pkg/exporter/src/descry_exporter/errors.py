from __future__ import annotations


class ExporterError(Exception):
    """Base class for exporter failures."""


class UnreadableImageError(ExporterError):
    """An image file is missing or cannot be decoded."""


class EmptyCropError(ExporterError):
    """A ground-truth box covers no pixels of the decoded image."""


class UnknownModelError(ExporterError):
    """The --model specification cannot be resolved to an embedder."""
