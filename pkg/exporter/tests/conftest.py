from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image


def _build_toy_dataset(root: Path, n_images: int = 10) -> Path:
    """Ten small seeded-noise PNGs with a dozen boxes across three classes."""
    image_dir = root / "images"
    image_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(1234)

    images, annotations = [], []
    ann_id = 1
    for i in range(n_images):
        width, height = 64, 48
        pixels = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
        name = f"toy_{i:02d}.png"
        Image.fromarray(pixels, "RGB").save(image_dir / name)
        images.append({"id": i + 1, "width": width, "height": height, "file_name": name})
        annotations.append({
            "id": ann_id, "image_id": i + 1, "category_id": (i % 3) + 1,
            "bbox": [4 + i, 3, 20, 16], "iscrowd": 0,
        })
        ann_id += 1
        if i % 4 == 0:  # a second, overlapping box on some images
            annotations.append({
                "id": ann_id, "image_id": i + 1, "category_id": ((i + 1) % 3) + 1,
                "bbox": [10, 8, 30, 24], "iscrowd": 0,
            })
            ann_id += 1
    # one ignore region that must never get a crop vector
    annotations.append({
        "id": ann_id, "image_id": 1, "category_id": 1,
        "bbox": [0, 0, 40, 40], "iscrowd": 1,
    })

    doc = {
        "categories": [
            {"id": 1, "name": "red widget"},
            {"id": 2, "name": "blue widget"},
            {"id": 3, "name": "green widget"},
        ],
        "images": images,
        "annotations": annotations,
    }
    path = root / "toy.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


@pytest.fixture
def build_toy_dataset():
    return _build_toy_dataset
