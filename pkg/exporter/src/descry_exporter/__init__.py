"""descry-exporter: crops ground-truth boxes, embeds crops and class
prompts with a vision-language model, and writes the EMBF stores the
descry harness reads."""

from __future__ import annotations

__version__ = "0.1.0"
