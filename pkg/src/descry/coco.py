"""COCO-format dataset and detection-result ingestion.

Loads annotation files of the usual shape (``images`` / ``annotations`` /
``categories``, boxes as ``[x, y, w, h]``), validates cross-references,
clamps boxes to image bounds, and exposes immutable indexed views. Pixel
data is never touched here.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    DanglingReferenceError,
    DegenerateBoxError,
    IoFailure,
    MalformedFileError,
)

_WHITESPACE_RUN = re.compile(r"\s+")


def normalize_name(name: str) -> str:
    """Canonical form of a class name: NFC, lowercased, whitespace collapsed."""
    folded = unicodedata.normalize("NFC", name).lower().strip()
    return _WHITESPACE_RUN.sub(" ", folded)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixels: top-left corner plus width and height."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for v in (self.x, self.y, self.w, self.h):
            if not _finite(v):
                raise DegenerateBoxError(f"non-finite box coordinate in {self!r}")
        if self.w <= 0 or self.h <= 0:
            raise DegenerateBoxError(f"box has no area: {self!r}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def clamped(self, width: float, height: float) -> "BBox":
        """Intersect with the image rectangle; error if nothing remains."""
        x1 = min(max(self.x, 0.0), width)
        y1 = min(max(self.y, 0.0), height)
        x2 = min(max(self.x + self.w, 0.0), width)
        y2 = min(max(self.y + self.h, 0.0), height)
        if x2 - x1 <= 0 or y2 - y1 <= 0:
            raise DegenerateBoxError(
                f"box {self!r} lies outside a {width}x{height} image"
            )
        return BBox(x1, y1, x2 - x1, y2 - y1)


def _finite(v: float) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and v == v and abs(v) != float("inf")


@dataclass(frozen=True)
class Category:
    id: int
    name: str
    normalized_name: str = field(init=False)

    def __post_init__(self) -> None:
        if not isinstance(self.id, int) or self.id <= 0:
            raise MalformedFileError(f"category id must be a positive integer, got {self.id!r}")
        if not self.name:
            raise MalformedFileError(f"category {self.id} has an empty name")
        object.__setattr__(self, "normalized_name", normalize_name(self.name))


@dataclass(frozen=True)
class ImageInfo:
    id: int
    width: float
    height: float
    file_name: str


@dataclass(frozen=True)
class Annotation:
    id: int
    image_id: int
    category_id: int
    bbox: BBox
    ignore: bool = False


@dataclass(frozen=True)
class Detection:
    image_id: int
    category_id: int
    bbox: BBox
    score: float


class Dataset:
    """Validated, immutable detection dataset for a single task."""

    def __init__(
        self,
        dataset_id: str,
        categories: list[Category],
        images: list[ImageInfo],
        annotations: list[Annotation],
    ) -> None:
        self.dataset_id = dataset_id
        self.categories = tuple(categories)
        self.images = tuple(images)
        self.annotations = tuple(annotations)

        self.categories_by_id = _unique_index(self.categories, "category")
        self.images_by_id = _unique_index(self.images, "image")

        anns_by_image: dict[int, list[Annotation]] = {img.id: [] for img in self.images}
        seen_ann_ids: set[int] = set()
        for ann in self.annotations:
            if ann.id in seen_ann_ids:
                raise MalformedFileError(
                    f"{dataset_id}: duplicate annotation id {ann.id}"
                )
            seen_ann_ids.add(ann.id)
            if ann.image_id not in self.images_by_id:
                raise DanglingReferenceError(
                    f"{dataset_id}: annotation {ann.id} references unknown image {ann.image_id}"
                )
            if ann.category_id not in self.categories_by_id:
                raise DanglingReferenceError(
                    f"{dataset_id}: annotation {ann.id} references unknown category {ann.category_id}"
                )
            img = self.images_by_id[ann.image_id]
            box = ann.bbox
            if box.x < 0 or box.y < 0 or box.x + box.w > img.width or box.y + box.h > img.height:
                raise DegenerateBoxError(
                    f"{dataset_id}: annotation {ann.id} box not clamped to image bounds"
                )
            anns_by_image[ann.image_id].append(ann)
        self.annotations_by_image: dict[int, tuple[Annotation, ...]] = {
            img_id: tuple(lst) for img_id, lst in anns_by_image.items()
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.dataset_id == other.dataset_id
            and self.categories == other.categories
            and self.images == other.images
            and self.annotations == other.annotations
        )

    def __repr__(self) -> str:
        return (
            f"Dataset({self.dataset_id!r}, {len(self.categories)} categories, "
            f"{len(self.images)} images, {len(self.annotations)} annotations)"
        )


@dataclass(frozen=True)
class DetectionResultSet:
    """Detections bound to (and validated against) one Dataset."""

    dataset_id: str
    detections: tuple[Detection, ...]


def _unique_index(items, kind: str) -> dict:
    index = {}
    for item in items:
        if item.id in index:
            raise MalformedFileError(f"duplicate {kind} id {item.id}")
        index[item.id] = item
    return index


def _read_json(path: str | Path):
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"{path}: invalid JSON ({exc})") from exc


def _require(obj: dict, key: str, path) -> object:
    if key not in obj:
        raise MalformedFileError(f"{path}: missing required key {key!r}")
    return obj[key]


def _parse_bbox(raw: object, where: str) -> BBox:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise MalformedFileError(f"{where}: bbox must be [x, y, w, h], got {raw!r}")
    x, y, w, h = raw
    try:
        return BBox(float(x), float(y), float(w), float(h))
    except (TypeError, ValueError) as exc:
        raise MalformedFileError(f"{where}: non-numeric bbox {raw!r}") from exc


def load_dataset(path: str | Path, dataset_id: str | None = None) -> Dataset:
    """Load and validate a COCO annotation file.

    Boxes overrunning the image are clamped back inside; a box that ends up
    with no area is an error. ``iscrowd == 1`` marks the annotation as an
    ignore region (kept for evaluation, excluded from crops and episodes).
    """
    path = Path(path)
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise MalformedFileError(f"{path}: expected a JSON object at top level")
    if dataset_id is None:
        dataset_id = path.stem

    categories = []
    for raw in _require(doc, "categories", path):
        if not isinstance(raw, dict) or "id" not in raw or "name" not in raw:
            raise MalformedFileError(f"{path}: category entries need 'id' and 'name'")
        categories.append(Category(raw["id"], str(raw["name"])))

    images = []
    for raw in _require(doc, "images", path):
        if not isinstance(raw, dict):
            raise MalformedFileError(f"{path}: image entries must be objects")
        for key in ("id", "width", "height", "file_name"):
            _require(raw, key, path)
        if raw["width"] <= 0 or raw["height"] <= 0:
            raise MalformedFileError(f"{path}: image {raw['id']} has non-positive size")
        images.append(
            ImageInfo(raw["id"], float(raw["width"]), float(raw["height"]), str(raw["file_name"]))
        )
    images_by_id = {img.id: img for img in images}

    annotations = []
    for raw in _require(doc, "annotations", path):
        if not isinstance(raw, dict):
            raise MalformedFileError(f"{path}: annotation entries must be objects")
        for key in ("id", "image_id", "category_id", "bbox"):
            _require(raw, key, path)
        where = f"{path}: annotation {raw['id']}"
        box = _parse_bbox(raw["bbox"], where)
        img = images_by_id.get(raw["image_id"])
        if img is not None:
            box = box.clamped(img.width, img.height)
        annotations.append(
            Annotation(
                id=raw["id"],
                image_id=raw["image_id"],
                category_id=raw["category_id"],
                bbox=box,
                ignore=bool(raw.get("iscrowd", 0)),
            )
        )

    return Dataset(dataset_id, categories, images, annotations)


def dataset_to_coco(dataset: Dataset) -> dict:
    """Dataset rendered back into the COCO dict shape it was loaded from."""
    return {
        "categories": [
            {"id": c.id, "name": c.name} for c in dataset.categories
        ],
        "images": [
            {"id": i.id, "width": i.width, "height": i.height, "file_name": i.file_name}
            for i in dataset.images
        ],
        "annotations": [
            {
                "id": a.id,
                "image_id": a.image_id,
                "category_id": a.category_id,
                "bbox": [a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h],
                "area": a.bbox.area,
                "iscrowd": 1 if a.ignore else 0,
            }
            for a in dataset.annotations
        ],
    }


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    path = Path(path)
    try:
        path.write_text(json.dumps(dataset_to_coco(dataset), indent=2, sort_keys=True), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_detections(path: str | Path, dataset: Dataset) -> DetectionResultSet:
    """Load a COCO results file (a JSON list of detections) bound to *dataset*."""
    path = Path(path)
    doc = _read_json(path)
    if not isinstance(doc, list):
        raise MalformedFileError(f"{path}: expected a JSON list of detections")
    detections = []
    for i, raw in enumerate(doc):
        if not isinstance(raw, dict):
            raise MalformedFileError(f"{path}: detection {i} must be an object")
        for key in ("image_id", "category_id", "bbox", "score"):
            _require(raw, key, path)
        if raw["image_id"] not in dataset.images_by_id:
            raise DanglingReferenceError(
                f"{path}: detection {i} references unknown image {raw['image_id']}"
            )
        if raw["category_id"] not in dataset.categories_by_id:
            raise DanglingReferenceError(
                f"{path}: detection {i} references unknown category {raw['category_id']}"
            )
        score = raw["score"]
        if not _finite(score):
            raise MalformedFileError(f"{path}: detection {i} has non-finite score {score!r}")
        detections.append(
            Detection(raw["image_id"], raw["category_id"], _parse_bbox(raw["bbox"], f"{path}: detection {i}"), float(score))
        )
    return DetectionResultSet(dataset.dataset_id, tuple(detections))


def crop_manifest(dataset: Dataset) -> list[tuple[int, str, BBox]]:
    """One (ann_id, image file name, box) per non-ignored annotation, by ann id."""
    rows = [
        (ann.id, dataset.images_by_id[ann.image_id].file_name, ann.bbox)
        for ann in dataset.annotations
        if not ann.ignore
    ]
    rows.sort(key=lambda row: row[0])
    return rows
