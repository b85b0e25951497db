"""Embedding backends.

Two families: `hf:<checkpoint>` runs a CLIP-family model through
transformers (weights must be available locally or downloadable), and
`hash:<dim>` is a fully deterministic offline stand-in that derives a
unit vector from a content digest. Both return L2-normalized float32
rows, so stores written from either validate identically downstream.
"""

from __future__ import annotations

import hashlib
from typing import Protocol, Sequence

import numpy as np
from PIL import Image

from .errors import UnknownModelError

DEFAULT_MODEL = "hf:openai/clip-vit-base-patch32"


class Embedder(Protocol):
    model_id: str
    dimension: int
    input_size: int

    def embed_images(self, images: Sequence[Image.Image]) -> np.ndarray: ...

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray: ...


def _normalize_rows(rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    return (rows / norms).astype(np.float32)


class HashEmbedder:
    """Digest-seeded unit vectors; identical input bytes, identical vector.

    No semantics, but byte-stable across runs and platforms, which is all
    the harness's structural contracts need.
    """

    def __init__(self, dimension: int = 64, input_size: int = 32) -> None:
        if dimension < 1:
            raise UnknownModelError(f"hash embedder dimension must be >= 1, got {dimension}")
        self.model_id = f"hash:{dimension}"
        self.dimension = dimension
        self.input_size = input_size

    def _vector_for(self, payload: bytes) -> np.ndarray:
        digest = hashlib.blake2b(payload, digest_size=16).digest()
        seed = int.from_bytes(digest[:8], "little")
        rng = np.random.Generator(np.random.PCG64(seed))
        return rng.standard_normal(self.dimension)

    def embed_images(self, images: Sequence[Image.Image]) -> np.ndarray:
        rows = [self._vector_for(b"img\x00" + img.tobytes()) for img in images]
        return _normalize_rows(np.stack(rows))

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        rows = [self._vector_for(b"txt\x00" + t.encode("utf-8")) for t in texts]
        return _normalize_rows(np.stack(rows))


class ClipEmbedder:
    """CLIP-family checkpoint through transformers, lazily loaded."""

    def __init__(self, checkpoint: str) -> None:
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise UnknownModelError(
                f"model {checkpoint!r} needs torch and transformers installed "
                "(pip install 'descry-exporter[clip]')"
            ) from exc
        self._torch = torch
        self.model_id = f"hf:{checkpoint}"
        self._model = CLIPModel.from_pretrained(checkpoint)
        self._model.eval()
        self._processor = CLIPProcessor.from_pretrained(checkpoint)
        self.dimension = int(self._model.config.projection_dim)
        self.input_size = int(self._model.config.vision_config.image_size)

    def embed_images(self, images: Sequence[Image.Image]) -> np.ndarray:
        inputs = self._processor(images=list(images), return_tensors="pt")
        with self._torch.no_grad():
            features = self._model.get_image_features(**inputs)
        return _normalize_rows(features.cpu().numpy())

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        inputs = self._processor(text=list(texts), return_tensors="pt", padding=True)
        with self._torch.no_grad():
            features = self._model.get_text_features(**inputs)
        return _normalize_rows(features.cpu().numpy())


def resolve_embedder(spec: str) -> Embedder:
    """Map a --model string onto an embedder instance."""
    if spec.startswith("hash:"):
        return HashEmbedder(int(spec.split(":", 1)[1]))
    if spec.startswith("hf:"):
        return ClipEmbedder(spec.split(":", 1)[1])
    if ":" not in spec:
        return ClipEmbedder(spec)
    raise UnknownModelError(f"unrecognized model spec {spec!r}")
