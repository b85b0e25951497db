"""descry: a harness for profiling detection-dataset describability,
sampling reproducible K-shot episodes, and aggregating COCO-style AP
across describability splits."""

from __future__ import annotations

__version__ = "0.1.0"
