"""Zero-shot profiling of how text-describable a dataset collection is.

Every ground-truth crop is classified against one prompt embedding per
class in the *union* vocabulary of all datasets; a dataset's score is the
fraction of its crops classified as their own class. Predictions landing
in another dataset's classes are errors by construction, which keeps the
score comparable across datasets with different class counts. Datasets
are then ranked by score and cut into fixed-size splits.
"""

from __future__ import annotations

import numpy as np

from .coco import Dataset
from .embeddings import EmbeddingStore
from .errors import (
    DimensionMismatchError,
    EmptyCollectionError,
    EmptyDatasetError,
    MissingEmbeddingError,
    SizeMismatchError,
)

DEFAULT_PROMPT_TEMPLATE = "an image of {}"

CROP_KEY_PREFIX = "ann:"
PROMPT_KEY_PREFIX = "prompt:"


def crop_key(ann_id: int) -> str:
    return f"{CROP_KEY_PREFIX}{ann_id}"


def prompt_key(class_name: str) -> str:
    return f"{PROMPT_KEY_PREFIX}{class_name}"


class UnionClassSet:
    """Deduplicated union of normalized class names across datasets.

    classes are sorted ascending (which is also UTF-8 byte order);
    membership maps each dataset to the indices of its own classes.
    """

    def __init__(self, classes: list[str], membership: dict[str, frozenset[int]]) -> None:
        self.classes = tuple(classes)
        self.index = {name: i for i, name in enumerate(self.classes)}
        self.membership = dict(membership)

    def __len__(self) -> int:
        return len(self.classes)


def build_union(datasets: list[Dataset]) -> UnionClassSet:
    if not datasets:
        raise EmptyCollectionError("need at least one dataset to build a class union")
    names: set[str] = set()
    for ds in datasets:
        names.update(c.normalized_name for c in ds.categories)
    classes = sorted(names)
    index = {name: i for i, name in enumerate(classes)}
    membership = {
        ds.dataset_id: frozenset(index[c.normalized_name] for c in ds.categories)
        for ds in datasets
    }
    return UnionClassSet(classes, membership)


def prompt_matrix(store: EmbeddingStore, union: UnionClassSet) -> np.ndarray:
    """Stack the stored prompt vector of every union class, in class order."""
    rows = []
    for name in union.classes:
        vec = store.get(prompt_key(name))
        if vec is None:
            raise MissingEmbeddingError(f"store lacks {prompt_key(name)!r}")
        rows.append(vec)
    return np.stack(rows).astype(np.float32, copy=False)


def classify_crop(crop_vector: np.ndarray, prompts: np.ndarray) -> int:
    """Index of the prompt with the largest dot product; ties go low.

    Inputs are float32; scores accumulate in float64 so the argmax is
    stable across platforms.
    """
    crop_vector = np.asarray(crop_vector)
    if prompts.ndim != 2 or crop_vector.shape != (prompts.shape[1],):
        raise DimensionMismatchError(
            f"crop vector {crop_vector.shape} does not match prompts {prompts.shape}"
        )
    scores = prompts.astype(np.float64) @ crop_vector.astype(np.float64)
    return int(np.argmax(scores))


def dataset_accuracy(
    dataset: Dataset,
    store: EmbeddingStore,
    union: UnionClassSet,
    prompts: np.ndarray,
    macro: bool = False,
) -> tuple[float, int]:
    """Zero-shot accuracy of the dataset's crops over the union vocabulary.

    Returns (accuracy, evaluated crop count). Micro-averages over crops by
    default; with macro=True, averages per-class accuracies over classes
    that have at least one crop.
    """
    if prompts.shape[0] != len(union):
        raise DimensionMismatchError(
            f"prompt matrix has {prompts.shape[0]} rows for {len(union)} union classes"
        )
    hits: dict[int, int] = {}
    totals: dict[int, int] = {}
    evaluated = 0
    for ann in dataset.annotations:
        if ann.ignore:
            continue
        vec = store.get(crop_key(ann.id))
        if vec is None:
            raise MissingEmbeddingError(
                f"{dataset.dataset_id}: no stored vector for annotation {ann.id}"
            )
        target = union.index[dataset.categories_by_id[ann.category_id].normalized_name]
        predicted = classify_crop(vec, prompts)
        evaluated += 1
        totals[target] = totals.get(target, 0) + 1
        if predicted == target:
            hits[target] = hits.get(target, 0) + 1
    if evaluated == 0:
        raise EmptyDatasetError(f"{dataset.dataset_id}: no evaluable crops")
    if macro:
        per_class = [hits.get(t, 0) / n for t, n in totals.items()]
        return sum(per_class) / len(per_class), evaluated
    return sum(hits.values()) / evaluated, evaluated


class DescribabilityProfile:
    """Per-dataset accuracy plus the split assignment of the collection."""

    def __init__(
        self,
        accuracies: dict[str, float],
        instance_counts: dict[str, int],
        split_assignment: dict[str, str],
    ) -> None:
        self.accuracies = dict(accuracies)
        self.instance_counts = dict(instance_counts)
        self.split_assignment = dict(split_assignment)


def _ranked(accuracies: dict[str, float]) -> list[str]:
    # descending accuracy, ties broken by dataset id ascending
    return sorted(accuracies, key=lambda ds: (-accuracies[ds], ds))


def partition_splits(accuracies: dict[str, float], sizes: list[int]) -> dict[str, str]:
    """Assign datasets to splits S1..Sn of the given sizes, best scores first."""
    if any(s <= 0 for s in sizes):
        raise SizeMismatchError(f"split sizes must be positive, got {sizes}")
    if sum(sizes) != len(accuracies):
        raise SizeMismatchError(
            f"split sizes {sizes} sum to {sum(sizes)}, but there are {len(accuracies)} datasets"
        )
    assignment: dict[str, str] = {}
    ranked = _ranked(accuracies)
    start = 0
    for i, size in enumerate(sizes, start=1):
        for ds in ranked[start : start + size]:
            assignment[ds] = f"S{i}"
        start += size
    return assignment


def spectrum(profile: DescribabilityProfile) -> list[tuple[str, float, str]]:
    """(dataset_id, accuracy, split) rows in descending-accuracy order."""
    return [
        (ds, profile.accuracies[ds], profile.split_assignment[ds])
        for ds in _ranked(profile.accuracies)
    ]


def profile_collection(
    datasets: list[Dataset],
    stores: dict[str, EmbeddingStore],
    prompt_store: EmbeddingStore | None,
    sizes: list[int],
    macro: bool = False,
) -> DescribabilityProfile:
    """End-to-end profiling: union, per-dataset accuracy, split partition.

    Prompt vectors come from *prompt_store* when given, otherwise from each
    dataset's own store.
    """
    union = build_union(datasets)
    accuracies: dict[str, float] = {}
    counts: dict[str, int] = {}
    for ds in datasets:
        store = stores[ds.dataset_id]
        prompts = prompt_matrix(prompt_store if prompt_store is not None else store, union)
        accuracies[ds.dataset_id], counts[ds.dataset_id] = dataset_accuracy(
            ds, store, union, prompts, macro=macro
        )
    assignment = partition_splits(accuracies, sizes)
    return DescribabilityProfile(accuracies, counts, assignment)
