"""descry command line: validate, profile, sample, evaluate, report.

A declarative TOML config describes the dataset collection; every path in
it is resolved relative to the config file's directory. All subcommands
are deterministic for fixed inputs and flags, including under --jobs
parallelism. Exit codes: 0 success, 1 usage error, 2 data error, 3 I/O.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import click

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import describability, reporting
from .coco import Dataset, load_dataset, load_detections
from .embeddings import read_store
from .errors import DataError, IoFailure, MalformedFileError
from .evaluation import evaluate_dataset
from .fileio import atomic_write_text
from .sampling import sample_episode, write_episode_manifest

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_IO = 3


@dataclass(frozen=True)
class DatasetEntry:
    dataset_id: str
    annotation_path: Path
    image_root: Path | None
    embedding_path: Path | None


@dataclass(frozen=True)
class CollectionConfig:
    datasets: tuple[DatasetEntry, ...]
    prompt_template: str
    split_sizes: tuple[int, ...]
    shots: tuple[int, ...]
    seeds: int
    prompts_path: Path | None

    def entry(self, dataset_id: str) -> DatasetEntry:
        for entry in self.datasets:
            if entry.dataset_id == dataset_id:
                return entry
        raise MalformedFileError(f"dataset {dataset_id!r} is not in the config")


def load_config(path: str | Path) -> CollectionConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise MalformedFileError(f"{path}: invalid TOML ({exc})") from exc

    base = path.parent

    def resolve(p: str | None) -> Path | None:
        return None if p is None else (base / p)

    raw_datasets = raw.get("datasets", [])
    if not isinstance(raw_datasets, list) or not all(isinstance(e, dict) for e in raw_datasets):
        raise MalformedFileError(f"{path}: 'datasets' must be an array of tables")

    entries = []
    seen: set[str] = set()
    for raw_entry in raw_datasets:
        if "dataset_id" not in raw_entry or "annotation_path" not in raw_entry:
            raise MalformedFileError(f"{path}: dataset entries need dataset_id and annotation_path")
        dataset_id = str(raw_entry["dataset_id"])
        if "/" in dataset_id or "\\" in dataset_id:
            raise MalformedFileError(f"{path}: dataset_id {dataset_id!r} must not contain path separators")
        if dataset_id in seen:
            raise MalformedFileError(f"{path}: duplicate dataset_id {dataset_id!r}")
        seen.add(dataset_id)
        entries.append(
            DatasetEntry(
                dataset_id=dataset_id,
                annotation_path=base / raw_entry["annotation_path"],
                image_root=resolve(raw_entry.get("image_root")),
                embedding_path=resolve(raw_entry.get("embedding_path")),
            )
        )
    if not entries:
        raise MalformedFileError(f"{path}: config declares no datasets")

    return CollectionConfig(
        datasets=tuple(entries),
        prompt_template=str(raw.get("prompt_template", describability.DEFAULT_PROMPT_TEMPLATE)),
        split_sizes=tuple(int(s) for s in raw.get("split_sizes", [])),
        shots=tuple(int(k) for k in raw.get("shots", [1, 3, 5, 10])),
        seeds=int(raw.get("seeds", 5)),
        prompts_path=resolve(raw.get("prompts_path")),
    )


def _parallel_map(fn, items, jobs: int):
    """Map preserving input order; thread pool only when jobs > 1."""
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _load_entry(entry: DatasetEntry) -> Dataset:
    return load_dataset(entry.annotation_path, dataset_id=entry.dataset_id)


@click.group()
def cli() -> None:
    """Benchmark harness for describability-split detection evaluation."""


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--jobs", default=1, show_default=True, type=click.IntRange(min=1))
def validate(config_path: str, jobs: int) -> None:
    """Load every dataset in the config and report invariant violations."""
    config = load_config(config_path)

    def check(entry: DatasetEntry):
        try:
            ds = _load_entry(entry)
        except (DataError, IoFailure) as exc:
            return entry.dataset_id, f"FAIL {entry.dataset_id}: {exc}"
        return entry.dataset_id, (
            f"OK   {entry.dataset_id}: {len(ds.categories)} categories, "
            f"{len(ds.images)} images, {len(ds.annotations)} annotations"
        )

    results = _parallel_map(check, list(config.datasets), jobs)
    failed = False
    for _, line in results:
        click.echo(line)
        failed = failed or line.startswith("FAIL")
    if failed:
        raise DataError("one or more datasets failed validation")


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--split-sizes", default=None, help="Comma-separated sizes, e.g. 12,12,11.")
@click.option("--macro", is_flag=True, help="Average per class instead of per crop.")
@click.option("--svg", is_flag=True)
@click.option("--jobs", default=1, show_default=True, type=click.IntRange(min=1))
def profile(config_path: str, out_dir: str, split_sizes: str | None, macro: bool, svg: bool, jobs: int) -> None:
    """Score every dataset's crops over the union vocabulary and split."""
    config = load_config(config_path)
    sizes = (
        [int(s) for s in split_sizes.split(",")]
        if split_sizes
        else list(config.split_sizes)
    )
    if not sizes:
        raise MalformedFileError("no split sizes given (config split_sizes or --split-sizes)")

    datasets = _parallel_map(_load_entry, list(config.datasets), jobs)
    stores = {}
    for entry in config.datasets:
        if entry.embedding_path is None:
            raise MalformedFileError(f"dataset {entry.dataset_id!r} has no embedding_path")
        stores[entry.dataset_id] = read_store(entry.embedding_path)
    prompt_store = read_store(config.prompts_path) if config.prompts_path else None

    result = describability.profile_collection(datasets, stores, prompt_store, sizes, macro=macro)
    rows = [
        (ds, acc, result.instance_counts[ds], split)
        for ds, acc, split in describability.spectrum(result)
    ]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "spectrum.csv", reporting.spectrum_csv(rows))
    atomic_write_text(
        out / "splits.json",
        json.dumps(result.split_assignment, indent=2, sort_keys=True) + "\n",
    )
    if svg:
        atomic_write_text(out / "spectrum.svg", reporting._spectrum_svg(rows))
    click.echo(f"profiled {len(rows)} datasets -> {out / 'spectrum.csv'}")


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--dataset", "dataset_ids", multiple=True, help="Default: every config dataset.")
@click.option("--k", "ks", multiple=True, type=int, help="Default: config shots.")
@click.option("--seed", "seeds", multiple=True, type=int, help="Default: 0..config seeds-1.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--jobs", default=1, show_default=True, type=click.IntRange(min=1))
def sample(config_path: str, dataset_ids: tuple[str, ...], ks: tuple[int, ...],
           seeds: tuple[int, ...], out_dir: str, jobs: int) -> None:
    """Write K-shot episode manifests for the requested grid."""
    config = load_config(config_path)
    ids = list(dataset_ids) if dataset_ids else [e.dataset_id for e in config.datasets]
    ks = tuple(ks) if ks else config.shots
    seeds = tuple(seeds) if seeds else tuple(range(config.seeds))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def run(dataset_id: str) -> list[str]:
        dataset = _load_entry(config.entry(dataset_id))
        lines = []
        for k in ks:
            for seed in seeds:
                episode = sample_episode(dataset, k, seed)
                manifest = out / f"{dataset_id}_k{k}_seed{seed}.json"
                write_episode_manifest(episode, dataset, manifest)
                lines.append(
                    f"wrote {manifest} ({len(episode.image_ids)} images, "
                    f"{len(episode.annotation_ids)} annotations)"
                )
        return lines

    for lines in _parallel_map(run, ids, jobs):
        for line in lines:
            click.echo(line)


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--dataset", "dataset_id", required=True)
@click.option("--detections", "detections_path", required=True, type=click.Path())
@click.option("--out", "out_path", default=None, type=click.Path())
@click.option("--jobs", default=1, show_default=True, type=click.IntRange(min=1))
def evaluate(config_path: str, dataset_id: str, detections_path: str,
             out_path: str | None, jobs: int) -> None:
    """Evaluate a detection-results file against one dataset."""
    config = load_config(config_path)
    dataset = _load_entry(config.entry(dataset_id))
    results = load_detections(detections_path, dataset)
    ap = evaluate_dataset(dataset, results, jobs=jobs)
    doc = {
        "dataset_id": dataset_id,
        "ap_5095": ap.ap_5095,
        "per_class": {str(cid): value for cid, value in sorted(ap.per_class_ap.items())},
    }
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out_path:
        atomic_write_text(out_path, text)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text, nl=False)


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--results", "results_dir", required=True, type=click.Path())
@click.option("--splits", "splits_path", required=True, type=click.Path(),
              help="splits.json produced by `descry profile`.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--ratio", "ratio_pairs", multiple=True,
              help="OVD:COD method pair; default is every ordered pair.")
@click.option("--svg", is_flag=True)
def report(config_path: str, results_dir: str, splits_path: str, out_dir: str,
           ratio_pairs: tuple[str, ...], svg: bool) -> None:
    """Aggregate result files under RESULTS into per-split summary tables.

    Expects files laid out as <results>/<method>/k<k>/seed<s>/<dataset>.json
    as written by `descry evaluate --out`.
    """
    load_config(config_path)
    try:
        splits = json.loads(Path(splits_path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {splits_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedFileError(f"{splits_path}: invalid JSON ({exc})") from exc

    matrix = reporting.RunMatrix()
    root = Path(results_dir)
    for result_file in sorted(root.glob("*/k*/seed*/*.json")):
        method = result_file.parts[len(root.parts)]
        k = int(result_file.parts[len(root.parts) + 1][1:])
        seed = int(result_file.parts[len(root.parts) + 2][4:])
        doc = json.loads(result_file.read_text(encoding="utf-8"))
        matrix.add(method, k, seed, doc["dataset_id"], float(doc["ap_5095"]))

    summary = reporting.aggregate(matrix, splits)
    if ratio_pairs:
        pairs = []
        for spec in ratio_pairs:
            if ":" not in spec:
                raise click.UsageError(f"--ratio takes OVD:COD, got {spec!r}")
            ovd, cod = spec.split(":", 1)
            for method in (ovd, cod):
                if method not in summary.methods():
                    raise MalformedFileError(
                        f"--ratio names method {method!r}, but results only hold {summary.methods()}"
                    )
            pairs.append((ovd, cod))
    else:
        pairs = [(a, b) for a in summary.methods() for b in summary.methods() if a != b]
    ratio_rows = []
    for ovd, cod in pairs:
        ratios = reporting.ap_ratio(summary.select(ovd), summary.select(cod))
        ratio_rows.extend((ovd, cod, k, split, value) for (k, split), value in ratios.items())

    written = reporting.render_reports(summary, ratio_rows, None, out_dir, svg=svg)
    for path in written:
        click.echo(f"wrote {path}")


def main(argv: list[str] | None = None) -> int:
    """Run the CLI, mapping exceptions onto the documented exit codes."""
    try:
        cli.main(args=argv, prog_name="descry", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return EXIT_USAGE
    except click.Abort:
        return EXIT_USAGE
    except IoFailure as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_IO
    except DataError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_IO
    return EXIT_OK


def entry() -> None:
    sys.exit(main())
