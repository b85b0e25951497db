"""Acceptance suite: every criterion the harness must meet, at its stated
tolerance. Regression fixtures under tests/fixtures hold the reference
per-seed AP runs, the reference per-dataset crop-classification accuracies
with their split memberships, and the expected per-split summary cells."""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from descry.coco import Annotation, BBox, Category, Dataset, ImageInfo
from descry.describability import (
    build_union,
    crop_key,
    dataset_accuracy,
    partition_splits,
    prompt_key,
    prompt_matrix,
    spectrum,
    DescribabilityProfile,
)
from descry.embeddings import EmbeddingStore, read_store, write_store
from descry.errors import DuplicateKeyError, TruncatedFileError
from descry.evaluation import evaluate_dataset
from descry.reporting import (
    RunMatrix,
    SplitSummary,
    SummaryCell,
    aggregate,
    ap_ratio,
    round_half_up,
)
from descry.sampling import sample_episode, write_episode_manifest

from .conftest import (
    ann,
    cat,
    coco_doc,
    img,
    load_clip_accuracies,
    load_expected_summaries,
    load_runs_csv,
    make_dataset,
)
from .test_cli import build_collection
from .test_evaluation import build_results, oracle_evaluate, random_instance

TOLERANCE = 0.1 + 1e-9  # one-decimal cells, slack for the inputs' own rounding


def build_matrix(*csv_names: str) -> RunMatrix:
    matrix = RunMatrix()
    for name in csv_names:
        for method, k, seed, dataset_id, ap in load_runs_csv(name):
            matrix.add(method, k, seed, dataset_id, ap / 100.0)
    return matrix


def reference_splits() -> dict[str, str]:
    return {ds: split for ds, _, split in load_clip_accuracies()}


def expected_cells(method: str) -> list[tuple[int, str, float, float]]:
    return [
        (k, split, mean, std)
        for _, m, k, split, mean, std in load_expected_summaries()
        if m == method
    ]


def check_summary_cells(summary: SplitSummary, method: str) -> None:
    cells = expected_cells(method)
    assert cells, f"no expected cells for {method}"
    failures = []
    for k, split, mean, std in cells:
        cell = summary.cells[(method, k, split)]
        got_mean = round_half_up(cell.mean * 100.0, 1)
        got_std = round_half_up(cell.std * 100.0, 1)
        if abs(got_mean - mean) > TOLERANCE or abs(got_std - std) > TOLERANCE:
            failures.append(
                f"{method} k={k} {split}: got {got_mean}+-{got_std}, expected {mean}+-{std}"
            )
    assert not failures, "summary cells off by more than 0.1:\n" + "\n".join(failures)


# -- criterion: baseline-method summary regression ------------------------------

@pytest.mark.parametrize(
    "method", ["dyhead-fullft", "glipa-fullft", "frcnn-fullft", "fvit-fullft"]
)
def test_fullft_split_summary_regression(method):
    summary = aggregate(build_matrix("runs_fullft.csv"), reference_splits())
    check_summary_cells(summary, method)


def test_fullft_regression_runs_under_one_second():
    start = time.perf_counter()
    aggregate(build_matrix("runs_fullft.csv"), reference_splits())
    assert time.perf_counter() - start < 1.0


# -- criterion: finetuning-approach and pretrain-scaling regression -------------

@pytest.mark.parametrize(
    "method",
    ["dyhead-tfa", "glipa-tfa", "frcnn-tfa", "frcnn-fsce", "fvit-tfa", "fvit-fsce"],
)
def test_finetuning_split_summary_regression(method):
    summary = aggregate(build_matrix("runs_finetuning.csv"), reference_splits())
    check_summary_cells(summary, method)


@pytest.mark.parametrize(
    "method",
    [
        "dyhead-cocoo365-2k",
        "dyhead-cocoo365-20k",
        "dyhead-cocoo365-100k",
        "dyhead-cocoo365-200k",
        "glip-fullft",
    ],
)
def test_pretrain_scaling_summary_regression(method):
    summary = aggregate(
        build_matrix("runs_pretrain_scaling.csv", "runs_fullft.csv"), reference_splits()
    )
    check_summary_cells(summary, method)


# -- criterion: OVD/COD ratio cells ----------------------------------------------

def test_ovd_cod_ratio_cells():
    summary = aggregate(build_matrix("runs_fullft.csv"), reference_splits())

    def rounded(method: str) -> SplitSummary:
        return SplitSummary({
            (m, k, split): SummaryCell(round_half_up(c.mean * 100.0, 1) / 100.0, c.std, c.n_seeds)
            for (m, k, split), c in summary.select(method).cells.items()
            if k == 3
        })

    expected = {("S1"): 44.6 / 39.2, ("S2"): 37.1 / 33.9, ("S3"): 39.2 / 39.7}
    ratios = ap_ratio(rounded("glipa-fullft"), rounded("dyhead-fullft"))
    for split, value in expected.items():
        assert ratios[(3, split)] == pytest.approx(value, abs=1e-9)


# -- criterion: split partition of the reference collection ----------------------

def test_collection_partition_memberships():
    rows = load_clip_accuracies()
    accuracies = {ds: acc for ds, acc, _ in rows}
    expected = {ds: split for ds, _, split in rows}
    assignment = partition_splits(accuracies, [12, 12, 11])
    assert assignment == expected

    profile = DescribabilityProfile(accuracies, {ds: 1 for ds in accuracies}, assignment)
    ranked = [row[0] for row in spectrum(profile)]
    assert ranked[0] == "CottontailRabbits"
    assert ranked[12] == "ShellfishOpenImages"  # S2 upper boundary
    assert ranked[23] == "DroneControl"  # S2 lower boundary
    assert ranked[24] == "HardHatWorkers"  # S3 upper boundary


# -- criterion: AP equivalence with a brute-force oracle --------------------------

def test_ap_matches_bruteforce_oracle():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    for _ in range(1000):
        dataset, dets = random_instance(rng)
        results = build_results(dataset, dets)
        got = evaluate_dataset(dataset, results)
        expected = oracle_evaluate(dataset, results)
        for cid, value in expected.items():
            assert got.per_class_ap[cid] == pytest.approx(value, abs=1e-9)
        assert got.ap_5095 == pytest.approx(sum(expected.values()) / len(expected), abs=1e-9)
    assert time.perf_counter() - start < 30.0


# -- criterion: describability equivalence with a cosine-scan oracle --------------

def _random_profile_instance(rng):
    dim = int(rng.integers(3, 17))
    n_union = int(rng.integers(2, 21))
    class_names = [f"class {i:02d}" for i in range(n_union)]
    n_own = int(rng.integers(1, n_union + 1))
    own = sorted(rng.choice(n_union, size=n_own, replace=False).tolist())
    own_names = [class_names[i] for i in own]
    rest_names = [class_names[i] for i in range(n_union) if i not in own] or [class_names[own[0]]]

    n_crops = int(rng.integers(1, 51))
    categories = [Category(i + 1, name) for i, name in enumerate(own_names)]
    images = [ImageInfo(i + 1, 100.0, 100.0, f"i{i}.jpg") for i in range(n_crops)]
    annotations = [
        Annotation(i + 1, i + 1, int(rng.integers(1, len(own_names) + 1)), BBox(1, 1, 10, 10))
        for i in range(n_crops)
    ]
    target = Dataset("target", categories, images, annotations)
    filler = Dataset("filler", [Category(i + 1, n) for i, n in enumerate(rest_names)], [], [])

    def unit_rows(count):
        rows = rng.standard_normal((count, dim))
        return (rows / np.linalg.norm(rows, axis=1, keepdims=True)).astype(np.float32)

    union = build_union([target, filler])
    prompts = unit_rows(len(union))
    crops = unit_rows(n_crops)
    records = {crop_key(a.id): crops[i] for i, a in enumerate(target.annotations)}
    records |= {prompt_key(name): prompts[i] for i, name in enumerate(union.classes)}
    return target, union, EmbeddingStore(dim, records)


def _oracle_accuracy(dataset, union, store):
    """Exhaustive cosine scan, explicit formula, first-max tie rule."""
    ordered = sorted(union.classes)
    hits = total = 0
    for a in dataset.annotations:
        crop = [float(v) for v in store.get(crop_key(a.id))]
        crop_norm = math.sqrt(sum(v * v for v in crop))
        best, best_idx = None, 0
        for j, name in enumerate(ordered):
            row = [float(v) for v in store.get(prompt_key(name))]
            cos = sum(x * y for x, y in zip(crop, row)) / (
                crop_norm * math.sqrt(sum(v * v for v in row))
            )
            if best is None or cos > best:
                best, best_idx = cos, j
        truth = ordered.index(dataset.categories_by_id[a.category_id].normalized_name)
        total += 1
        hits += best_idx == truth
    return hits / total, total


def test_describability_matches_cosine_oracle():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        dataset, union, store = _random_profile_instance(rng)
        got = dataset_accuracy(dataset, store, union, prompt_matrix(store, union))
        assert got == _oracle_accuracy(dataset, union, store)


def test_out_of_vocabulary_predictions_are_errors(tmp_path):
    own = make_dataset(
        tmp_path,
        coco_doc([cat(1, "inside")], [img(1), img(2)], [ann(1, 1, 1), ann(2, 2, 1)]),
        "own",
    )
    other = make_dataset(tmp_path, coco_doc([cat(1, "outside")]), "other")
    union = build_union([own, other])
    e = np.eye(2, dtype=np.float32)
    outside_idx = union.index["outside"]
    store = EmbeddingStore(2, {
        crop_key(1): e[outside_idx], crop_key(2): e[outside_idx],
        prompt_key("inside"): e[1 - outside_idx], prompt_key("outside"): e[outside_idx],
    })
    accuracy, evaluated = dataset_accuracy(own, store, union, prompt_matrix(store, union))
    assert (accuracy, evaluated) == (0.0, 2)


# -- criterion: sampler invariants -----------------------------------------------

def _random_sampler_fixture(rng, index):
    n_cats = int(rng.integers(1, 16))
    n_images = int(rng.integers(10, 61))
    categories = [Category(c + 1, f"cat {c}") for c in range(n_cats)]
    images = [ImageInfo(i + 1, 200.0, 200.0, f"i{i}.jpg") for i in range(n_images)]
    annotations = []
    aid = 1
    for i in range(n_images):
        for cid in rng.choice(n_cats, size=int(rng.integers(1, min(n_cats, 4) + 1)),
                              replace=False):
            annotations.append(
                Annotation(aid, i + 1, int(cid) + 1, BBox(1, 1, 10, 10),
                           ignore=bool(rng.random() < 0.05))
            )
            aid += 1
    return Dataset(f"fixture-{index}", categories, images, annotations)


def _candidate_counts(dataset):
    pools: dict[int, set[int]] = {c.id: set() for c in dataset.categories}
    for a in dataset.annotations:
        if not a.ignore:
            pools[a.category_id].add(a.image_id)
    return {cid: len(pool) for cid, pool in pools.items()}


def test_sampler_invariants_randomized(tmp_path):
    rng = np.random.default_rng(99)
    fixtures = [_random_sampler_fixture(rng, i) for i in range(200)]
    for index, dataset in enumerate(fixtures):
        pools = _candidate_counts(dataset)
        for k in (1, 3, 5, 10):
            for seed in range(5):
                episode = sample_episode(dataset, k, seed)
                assert len(episode.image_ids) <= k * len(dataset.categories)
                selected = set(episode.image_ids)
                assert len(selected) == len(episode.image_ids)
                counts = {cid: 0 for cid in pools}
                chosen_anns = set()
                for image_id in selected:
                    seen = set()
                    for a in dataset.annotations_by_image[image_id]:
                        if a.ignore:
                            continue
                        chosen_anns.add(a.id)
                        if a.category_id not in seen:
                            seen.add(a.category_id)
                            counts[a.category_id] += 1
                for cid, available in pools.items():
                    assert counts[cid] >= min(k, available), (
                        f"fixture {index} k={k} seed={seed}: category {cid} "
                        f"covered by {counts[cid]} < min(k, {available})"
                    )
                assert counts == episode.per_category_image_counts
                assert chosen_anns == set(episode.annotation_ids)
                assert sample_episode(dataset, k, seed) == episode
        if index % 40 == 0:
            episode = sample_episode(dataset, 3, 1)
            p1 = tmp_path / f"m{index}_a.json"
            p2 = tmp_path / f"m{index}_b.json"
            write_episode_manifest(episode, dataset, p1)
            write_episode_manifest(episode, dataset, p2)
            assert p1.read_bytes() == p2.read_bytes()


def test_sampler_single_annotation_pattern(tmp_path):
    categories = [cat(c + 1, f"breed {c}") for c in range(37)]
    images, annotations = [], []
    nid = 1
    for c in range(37):
        for _ in range(12):
            images.append(img(nid))
            annotations.append(ann(nid, nid, c + 1))
            nid += 1
    dataset = make_dataset(tmp_path, coco_doc(categories, images, annotations), "pets")
    for k, total in ((1, 37), (3, 111), (5, 185)):
        for seed in range(5):
            episode = sample_episode(dataset, k, seed)
            assert len(episode.image_ids) == total
            assert len(episode.annotation_ids) == total


def test_sampler_cli_jobs_determinism(tmp_path):
    config = build_collection(tmp_path)
    from descry.cli import main

    out1, out2 = tmp_path / "j1", tmp_path / "j8"
    assert main(["sample", "--config", str(config), "--out", str(out1), "--jobs", "1"]) == 0
    assert main(["sample", "--config", str(config), "--out", str(out2), "--jobs", "8"]) == 0
    names = sorted(p.name for p in out1.iterdir())
    assert names == sorted(p.name for p in out2.iterdir())
    for name in names:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


# -- criterion: embedding-store round trip ----------------------------------------

@pytest.mark.parametrize("dim", [1, 8, 512])
@pytest.mark.parametrize("count", [0, 1, 10_000])
def test_embf_round_trip_bit_exact(tmp_path, dim, count):
    rng = np.random.default_rng(dim * 100_003 + count)
    records = {}
    for i in range(count):
        v = rng.standard_normal(dim)
        records[f"ann:{i}"] = (v / np.linalg.norm(v)).astype(np.float32)
    store = EmbeddingStore(dim, records)
    path = tmp_path / f"store_{dim}_{count}.embf"
    write_store(store, path)
    loaded = read_store(path)
    assert loaded.dimension == dim and len(loaded) == count
    for key, vec in store.items():
        assert loaded.get(key).tobytes() == vec.tobytes()


def test_embf_corruption_detected(tmp_path):
    rng = np.random.default_rng(5)
    records = {}
    for i in range(10):
        v = rng.standard_normal(8)
        records[f"ann:{i}"] = (v / np.linalg.norm(v)).astype(np.float32)
    store = EmbeddingStore(8, records)
    path = tmp_path / "store.embf"
    write_store(store, path)

    blob = path.read_bytes()
    truncated = tmp_path / "truncated.embf"
    truncated.write_bytes(blob[:-20])
    with pytest.raises(TruncatedFileError):
        read_store(truncated)

    import struct

    from descry.embeddings import FLAG_NORMALIZED, MAGIC

    duplicated = tmp_path / "duplicated.embf"
    header = struct.pack("<4sHBBIQ", MAGIC, 1, FLAG_NORMALIZED, 0, 1, 2)
    record = struct.pack("<H", 5) + b"ann:0" + struct.pack("<f", 1.0)
    duplicated.write_bytes(header + record + record)
    with pytest.raises(DuplicateKeyError):
        read_store(duplicated)
