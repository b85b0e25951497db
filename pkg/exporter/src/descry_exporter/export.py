"""Crop extraction and store writing.

Crops are the exact clamped ground-truth boxes snapped outward to whole
pixels, resized with the aspect ratio preserved, and padded to a square
canvas before embedding. Keys follow the harness convention: "ann:<id>"
for crops, "prompt:<normalized class name>" for prompts.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from descry.coco import BBox, Dataset, crop_manifest, load_dataset
from descry.describability import DEFAULT_PROMPT_TEMPLATE, crop_key, prompt_key
from descry.embeddings import EmbeddingStore, write_store

from .embedders import DEFAULT_MODEL, Embedder, resolve_embedder
from .errors import EmptyCropError, UnreadableImageError


@dataclass(frozen=True)
class ExportJob:
    annotation_path: Path
    image_root: Path
    out_crops: Path
    out_prompts: Path
    model: str = DEFAULT_MODEL
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE
    batch_size: int = 32
    classes: tuple[str, ...] | None = field(default=None)


def prepare_crop(image: Image.Image, box: BBox, size: int) -> Image.Image:
    """Cut the box out, resize longest side to *size*, pad square with black."""
    left = max(0, math.floor(box.x))
    top = max(0, math.floor(box.y))
    right = min(image.width, math.ceil(box.x + box.w))
    bottom = min(image.height, math.ceil(box.y + box.h))
    if right <= left or bottom <= top:
        raise EmptyCropError(
            f"box ({box.x}, {box.y}, {box.w}, {box.h}) covers no pixels of a "
            f"{image.width}x{image.height} image"
        )
    crop = image.crop((left, top, right, bottom))
    scale = size / max(crop.width, crop.height)
    resized = crop.resize(
        (max(1, round(crop.width * scale)), max(1, round(crop.height * scale))),
        Image.BILINEAR,
    )
    canvas = Image.new("RGB", (size, size), (0, 0, 0))
    canvas.paste(resized, ((size - resized.width) // 2, (size - resized.height) // 2))
    return canvas


def _open_image(path: Path) -> Image.Image:
    try:
        with Image.open(path) as handle:
            return handle.convert("RGB")
    except (OSError, ValueError) as exc:
        raise UnreadableImageError(f"cannot read image {path}: {exc}") from exc


def export_crop_embeddings(job: ExportJob, dataset: Dataset, embedder: Embedder) -> EmbeddingStore:
    """One normalized vector per non-ignored annotation, written to out_crops."""
    manifest = crop_manifest(dataset)
    records: dict[str, np.ndarray] = {}
    batch_keys: list[str] = []
    batch_crops: list[Image.Image] = []
    opened: dict[str, Image.Image] = {}

    def flush() -> None:
        if not batch_keys:
            return
        vectors = embedder.embed_images(batch_crops)
        for key, vec in zip(batch_keys, vectors):
            records[key] = vec
        batch_keys.clear()
        batch_crops.clear()

    for ann_id, file_name, box in manifest:
        if file_name not in opened:
            opened[file_name] = _open_image(job.image_root / file_name)
        batch_keys.append(crop_key(ann_id))
        batch_crops.append(prepare_crop(opened[file_name], box, embedder.input_size))
        if len(batch_keys) >= job.batch_size:
            flush()
    flush()

    store = EmbeddingStore(embedder.dimension, records)
    write_store(store, job.out_crops)
    _write_meta(job.out_crops, job, embedder, len(records))
    return store


def export_prompt_embeddings(
    classes: list[str], template: str, embedder: Embedder, out_path: Path, job: ExportJob | None = None
) -> EmbeddingStore:
    """One normalized vector per class prompt, written to out_path."""
    if not classes:
        raise ValueError("prompt export needs at least one class name")
    if len(set(classes)) != len(classes):
        raise ValueError("class list contains duplicates; the union must be deduplicated upstream")
    texts = [template.format(name) for name in classes]
    vectors = embedder.embed_texts(texts)
    store = EmbeddingStore(
        embedder.dimension,
        {prompt_key(name): vec for name, vec in zip(classes, vectors)},
    )
    write_store(store, out_path)
    if job is not None:
        _write_meta(out_path, job, embedder, len(classes))
    return store


def run_job(job: ExportJob) -> tuple[EmbeddingStore, EmbeddingStore]:
    """Export both stores for one dataset; returns (crops, prompts)."""
    dataset = load_dataset(job.annotation_path)
    embedder = resolve_embedder(job.model)
    crops = export_crop_embeddings(job, dataset, embedder)
    classes = (
        list(job.classes)
        if job.classes is not None
        else sorted({c.normalized_name for c in dataset.categories})
    )
    prompts = export_prompt_embeddings(classes, job.prompt_template, embedder, job.out_prompts, job)
    return crops, prompts


def _write_meta(store_path: Path, job: ExportJob, embedder: Embedder, count: int) -> None:
    meta = {
        "model": embedder.model_id,
        "template": job.prompt_template,
        "dimension": embedder.dimension,
        "records": count,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    Path(str(store_path) + ".meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
