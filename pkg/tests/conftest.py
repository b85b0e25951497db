from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from descry.coco import Dataset, load_dataset

FIXTURES = Path(__file__).parent / "fixtures"


def coco_doc(categories=None, images=None, annotations=None) -> dict:
    return {
        "categories": categories if categories is not None else [],
        "images": images if images is not None else [],
        "annotations": annotations if annotations is not None else [],
    }


def write_coco(path: Path, doc: dict) -> Path:
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def make_dataset(tmp_path: Path, doc: dict, dataset_id: str = "fixture") -> Dataset:
    return load_dataset(write_coco(tmp_path / f"{dataset_id}.json", doc), dataset_id=dataset_id)


def cat(cid: int, name: str) -> dict:
    return {"id": cid, "name": name}


def img(iid: int, w: float = 100, h: float = 100, file_name: str | None = None) -> dict:
    return {"id": iid, "width": w, "height": h, "file_name": file_name or f"img_{iid}.jpg"}


def ann(aid: int, iid: int, cid: int, bbox=(10, 10, 20, 20), iscrowd: int = 0) -> dict:
    return {"id": aid, "image_id": iid, "category_id": cid, "bbox": list(bbox), "iscrowd": iscrowd}


def unit(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    return (v / np.linalg.norm(v)).astype(np.float32)


def load_runs_csv(name: str):
    with open(FIXTURES / name, newline="") as f:
        for row in csv.DictReader(f):
            yield row["method"], int(row["k"]), int(row["seed"]), row["dataset_id"], float(row["ap"])


def load_expected_summaries():
    with open(FIXTURES / "expected_summaries.csv", newline="") as f:
        for row in csv.DictReader(f):
            yield (row["group"], row["method"], int(row["k"]), row["split"],
                   float(row["mean"]), float(row["std"]))


def load_clip_accuracies():
    with open(FIXTURES / "clip_accuracy.csv", newline="") as f:
        return [(row["dataset_id"], float(row["accuracy"]), row["split"])
                for row in csv.DictReader(f)]


# -- acceptance reporting ------------------------------------------------------

_acceptance: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance.append((report.nodeid.split("::", 1)[1], report.outcome))


@pytest.hookimpl(trylast=True)
def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for name, outcome in _acceptance:
        terminalreporter.write_line(f"  {'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
