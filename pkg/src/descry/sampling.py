"""Seeded K-shot episode sampling with per-category image coverage.

An episode selects images greedily so that every category ends up on at
least K selected images (all of them, when a category has fewer than K).
Selection order is fully determined by (dataset_id, k, seed): categories
are visited in one PRNG-shuffled order, and draws are uniform over the
category's not-yet-selected images sorted by image id. An image counts
toward every category it contains, so multi-category images are shared
credit and the episode never exceeds K x |categories| images.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .coco import Dataset, dataset_to_coco, load_dataset
from .errors import ForeignEpisodeError, IoFailure, MalformedFileError
from .fileio import atomic_write_text
from .prng import episode_rng


@dataclass(frozen=True)
class Episode:
    """A sampled K-shot training subset of one dataset.

    image_ids keeps greedy insertion order; annotation_ids holds every
    non-ignored annotation on a selected image, ascending by id.
    """

    dataset_id: str
    k: int
    seed: int
    image_ids: tuple[int, ...]
    annotation_ids: tuple[int, ...]
    per_category_image_counts: dict[int, int]
    shortfall_category_ids: tuple[int, ...]


@dataclass(frozen=True)
class EpisodeStats:
    n_images: int
    n_annotations: int
    per_category_image_counts: dict[int, int]


def _category_candidates(dataset: Dataset) -> dict[int, list[int]]:
    """category id -> image ids holding >=1 non-ignored box of it, ascending."""
    images: dict[int, set[int]] = {c.id: set() for c in dataset.categories}
    for ann in dataset.annotations:
        if not ann.ignore:
            images[ann.category_id].add(ann.image_id)
    return {cid: sorted(ids) for cid, ids in images.items()}


def sample_episode(dataset: Dataset, k: int, seed: int) -> Episode:
    """Greedily cover every category with >= k selected images (when possible)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rng = episode_rng(dataset.dataset_id, k, seed)

    category_order = sorted(c.id for c in dataset.categories)
    rng.shuffle(category_order)
    candidates = _category_candidates(dataset)

    selected: list[int] = []
    selected_set: set[int] = set()
    shortfall: list[int] = []
    for cid in category_order:
        pool = candidates[cid]
        if len(pool) < k:
            shortfall.append(cid)
        have = sum(1 for img in pool if img in selected_set)
        remaining = [img for img in pool if img not in selected_set]
        while have < k and remaining:
            img = remaining.pop(rng.next_below(len(remaining)))
            selected.append(img)
            selected_set.add(img)
            have += 1

    annotation_ids = sorted(
        ann.id
        for img in selected
        for ann in dataset.annotations_by_image[img]
        if not ann.ignore
    )
    counts = _coverage_counts(dataset, selected_set)
    return Episode(
        dataset_id=dataset.dataset_id,
        k=k,
        seed=seed,
        image_ids=tuple(selected),
        annotation_ids=tuple(annotation_ids),
        per_category_image_counts=counts,
        shortfall_category_ids=tuple(sorted(shortfall)),
    )


def _coverage_counts(dataset: Dataset, selected: set[int]) -> dict[int, int]:
    counts = {c.id: 0 for c in dataset.categories}
    for img in selected:
        seen: set[int] = set()
        for ann in dataset.annotations_by_image[img]:
            if not ann.ignore and ann.category_id not in seen:
                seen.add(ann.category_id)
                counts[ann.category_id] += 1
    return counts


def episode_stats(episode: Episode, dataset: Dataset) -> EpisodeStats:
    """Image/annotation totals and per-category coverage of an episode."""
    if episode.dataset_id != dataset.dataset_id:
        raise ForeignEpisodeError(
            f"episode belongs to {episode.dataset_id!r}, not {dataset.dataset_id!r}"
        )
    return EpisodeStats(
        n_images=len(episode.image_ids),
        n_annotations=len(episode.annotation_ids),
        per_category_image_counts=dict(episode.per_category_image_counts),
    )


def _sidecar_path(path: Path) -> Path:
    if path.suffix == ".json":
        return path.with_suffix(".meta.json")
    return path.with_name(path.name + ".meta.json")


def write_episode_manifest(episode: Episode, dataset: Dataset, path: str | Path) -> None:
    """Write the episode as a COCO-subset file plus a sidecar header.

    The subset keeps the dataset's full category list, the selected images
    in episode order, and the episode's annotations; any detector trainer
    that reads COCO can consume it directly.
    """
    if episode.dataset_id != dataset.dataset_id:
        raise ForeignEpisodeError(
            f"episode belongs to {episode.dataset_id!r}, not {dataset.dataset_id!r}"
        )
    path = Path(path)
    full = dataset_to_coco(dataset)
    keep_imgs = set(episode.image_ids)
    keep_anns = set(episode.annotation_ids)
    order = {img_id: i for i, img_id in enumerate(episode.image_ids)}
    body = {
        "categories": full["categories"],
        "images": sorted(
            (img for img in full["images"] if img["id"] in keep_imgs),
            key=lambda img: order[img["id"]],
        ),
        "annotations": [ann for ann in full["annotations"] if ann["id"] in keep_anns],
    }
    sidecar = {
        "dataset_id": episode.dataset_id,
        "k": episode.k,
        "seed": episode.seed,
        "n_images": len(episode.image_ids),
        "n_annotations": len(episode.annotation_ids),
        "shortfall_categories": list(episode.shortfall_category_ids),
    }
    atomic_write_text(path, json.dumps(body, indent=2, sort_keys=True) + "\n")
    atomic_write_text(_sidecar_path(path), json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def read_episode_manifest(path: str | Path) -> Episode:
    """Rebuild an Episode from a manifest pair, cross-checking the header."""
    path = Path(path)
    try:
        sidecar = json.loads(_sidecar_path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {_sidecar_path(path)}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"{_sidecar_path(path)}: invalid JSON ({exc})") from exc
    for key in ("dataset_id", "k", "seed", "n_images", "n_annotations", "shortfall_categories"):
        if key not in sidecar:
            raise MalformedFileError(f"{_sidecar_path(path)}: missing header key {key!r}")

    subset = load_dataset(path, dataset_id=sidecar["dataset_id"])
    image_ids = tuple(img.id for img in subset.images)
    annotation_ids = tuple(sorted(a.id for a in subset.annotations if not a.ignore))
    if len(image_ids) != sidecar["n_images"] or len(annotation_ids) != sidecar["n_annotations"]:
        raise MalformedFileError(
            f"{path}: header counts ({sidecar['n_images']}/{sidecar['n_annotations']}) "
            f"do not match body ({len(image_ids)}/{len(annotation_ids)})"
        )
    return Episode(
        dataset_id=sidecar["dataset_id"],
        k=sidecar["k"],
        seed=sidecar["seed"],
        image_ids=image_ids,
        annotation_ids=annotation_ids,
        per_category_image_counts=_coverage_counts(subset, set(image_ids)),
        shortfall_category_ids=tuple(sidecar["shortfall_categories"]),
    )
