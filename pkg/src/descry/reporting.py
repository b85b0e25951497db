"""Aggregation of per-dataset, per-seed AP runs into per-split summaries.

The statistic mirrors how multi-seed benchmark tables are usually built:
for each seed, average AP over the datasets of a split; then report the
mean of those per-seed values and their population standard deviation
across seeds. Values are kept as fractions in [0, 1] internally and only
scaled to percentages (half-up, one decimal) when rendered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from .errors import (
    DivisionByZeroMeanError,
    DuplicateKeyError,
    MissingCellError,
)
from .fileio import atomic_write_text

RunKey = tuple[str, int, int, str]  # (method, k, seed, dataset_id)


def round_half_up(value: float, decimals: int = 1) -> float:
    """Decimal rounding with ties away from zero, e.g. 0.25 -> 0.3."""
    exponent = Decimal(1).scaleb(-decimals)
    return float(Decimal(repr(value)).quantize(exponent, rounding=ROUND_HALF_UP))


class RunMatrix:
    """(method, k, seed, dataset_id) -> AP fraction, duplicate-free."""

    def __init__(self) -> None:
        self.entries: dict[RunKey, float] = {}

    def add(self, method: str, k: int, seed: int, dataset_id: str, ap: float) -> None:
        if not 0.0 <= ap <= 1.0:
            raise ValueError(f"ap must be a fraction in [0, 1], got {ap}")
        key = (method, k, seed, dataset_id)
        if key in self.entries:
            raise DuplicateKeyError(f"duplicate run entry {key}")
        self.entries[key] = ap

    def methods(self) -> list[str]:
        return sorted({m for m, _, _, _ in self.entries})

    def groups(self) -> list[tuple[str, int]]:
        return sorted({(m, k) for m, k, _, _ in self.entries})

    def seeds(self, method: str, k: int) -> list[int]:
        found = sorted({s for m, kk, s, _ in self.entries if m == method and kk == k})
        if found != list(range(len(found))):
            raise MissingCellError(
                f"seeds for ({method!r}, k={k}) must be contiguous from 0, got {found}"
            )
        return found


@dataclass(frozen=True)
class SummaryCell:
    mean: float
    std: float
    n_seeds: int


class SplitSummary:
    """(method, k, split) -> mean/std over seeds of the split-average AP."""

    def __init__(self, cells: dict[tuple[str, int, str], SummaryCell]) -> None:
        self.cells = dict(cells)

    def methods(self) -> list[str]:
        return sorted({m for m, _, _ in self.cells})

    def select(self, method: str) -> "SplitSummary":
        return SplitSummary({key: c for key, c in self.cells.items() if key[0] == method})

    def __len__(self) -> int:
        return len(self.cells)


def aggregate(
    matrix: RunMatrix,
    splits: dict[str, str],
    std_mode: str = "population",
) -> SplitSummary:
    """Summarize a run matrix per (method, k, split).

    Every split dataset must have an AP for every (method, k, seed) in the
    matrix; a hole is reported, never skipped. std_mode selects the
    population (default) or sample standard deviation across seeds.
    """
    if std_mode not in ("population", "sample"):
        raise ValueError(f"std_mode must be 'population' or 'sample', got {std_mode!r}")
    if not matrix.entries:
        raise MissingCellError("run matrix is empty")
    split_names = sorted(set(splits.values()))
    members: dict[str, list[str]] = {name: [] for name in split_names}
    for dataset_id, split in splits.items():
        members[split].append(dataset_id)
    for datasets in members.values():
        datasets.sort()  # fixed summation order: bitwise permutation invariance

    cells: dict[tuple[str, int, str], SummaryCell] = {}
    for method, k in matrix.groups():
        seeds = matrix.seeds(method, k)
        for split in split_names:
            per_seed: list[float] = []
            for seed in seeds:
                values = []
                for dataset_id in members[split]:
                    key = (method, k, seed, dataset_id)
                    if key not in matrix.entries:
                        raise MissingCellError(f"missing AP for {key}")
                    values.append(matrix.entries[key])
                per_seed.append(sum(values) / len(values))
            mean = sum(per_seed) / len(per_seed)
            denom = len(per_seed) if std_mode == "population" else max(len(per_seed) - 1, 1)
            std = math.sqrt(sum((v - mean) ** 2 for v in per_seed) / denom)
            cells[(method, k, split)] = SummaryCell(mean, std, len(per_seed))
    return SplitSummary(cells)


def ap_ratio(summary_ovd: SplitSummary, summary_cod: SplitSummary) -> dict[tuple[int, str], float]:
    """Ratio of aggregate means, OVD over COD, per (k, split)."""
    for name, summary in (("ovd", summary_ovd), ("cod", summary_cod)):
        if len(summary.methods()) != 1:
            raise ValueError(f"{name} summary must hold exactly one method, has {summary.methods()}")
    ovd = {(k, split): cell for (_, k, split), cell in summary_ovd.cells.items()}
    cod = {(k, split): cell for (_, k, split), cell in summary_cod.cells.items()}
    if set(ovd) != set(cod):
        missing = set(ovd) ^ set(cod)
        raise MissingCellError(f"summaries do not cover the same (k, split) cells: {sorted(missing)}")
    ratios: dict[tuple[int, str], float] = {}
    for key in sorted(ovd):
        if cod[key].mean == 0:
            raise DivisionByZeroMeanError(f"denominator mean is zero at (k, split)={key}")
        ratios[key] = ovd[key].mean / cod[key].mean
    return ratios


# -- rendering ----------------------------------------------------------------

def _percent(x: float) -> str:
    return f"{round_half_up(x * 100.0, 1):.1f}"


def summary_csv(summary: SplitSummary) -> str:
    lines = ["method,k,split,mean,std,n_seeds"]
    for (method, k, split) in sorted(summary.cells):
        cell = summary.cells[(method, k, split)]
        lines.append(f"{_csv(method)},{k},{split},{_percent(cell.mean)},{_percent(cell.std)},{cell.n_seeds}")
    return "\n".join(lines) + "\n"


def ratios_csv(ratio_rows: list[tuple[str, str, int, str, float]]) -> str:
    lines = ["ovd_method,cod_method,k,split,ratio"]
    for ovd, cod, k, split, value in sorted(ratio_rows):
        lines.append(f"{_csv(ovd)},{_csv(cod)},{k},{split},{value:.6f}")
    return "\n".join(lines) + "\n"


def spectrum_csv(rows: list[tuple[str, float, int, str]]) -> str:
    # rows arrive ranked (descending accuracy); order is preserved
    lines = ["dataset_id,accuracy,evaluated_crops,split"]
    for dataset_id, accuracy, evaluated, split in rows:
        lines.append(f"{_csv(dataset_id)},{_percent(accuracy)},{evaluated},{split}")
    return "\n".join(lines) + "\n"


def _csv(field: str) -> str:
    if any(ch in field for ch in ',"\n'):
        return '"' + field.replace('"', '""') + '"'
    return field


def render_reports(
    summary: SplitSummary,
    ratio_rows: list[tuple[str, str, int, str, float]],
    spectrum_rows: list[tuple[str, float, int, str]] | None,
    out_dir: str | Path,
    svg: bool = False,
) -> list[Path]:
    """Write summary/ratio/spectrum CSVs (and optional SVG charts).

    Output is byte-deterministic; empty ratio or spectrum inputs simply
    omit their files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit(name: str, text: str) -> None:
        path = out_dir / name
        atomic_write_text(path, text)
        written.append(path)

    emit("summary.csv", summary_csv(summary))
    if ratio_rows:
        emit("ratios.csv", ratios_csv(ratio_rows))
        if svg:
            emit("ratios.svg", _ratios_svg(ratio_rows))
    if spectrum_rows:
        emit("spectrum.csv", spectrum_csv(spectrum_rows))
        if svg:
            emit("spectrum.svg", _spectrum_svg(spectrum_rows))
    return written


_SPLIT_COLORS = ("#4c78a8", "#f58518", "#54a24b", "#e45756", "#72b7b2", "#b279a2")


def _split_color(split: str, splits: list[str]) -> str:
    return _SPLIT_COLORS[splits.index(split) % len(_SPLIT_COLORS)]


def _spectrum_svg(rows: list[tuple[str, float, int, str]]) -> str:
    """Horizontal bar chart of per-dataset accuracy, colored by split."""
    bar_h, gap, left, top, width = 14, 4, 220, 20, 360
    height = top * 2 + len(rows) * (bar_h + gap)
    splits = sorted({r[3] for r in rows})
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{left + width + 60}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
    ]
    y = top
    for dataset_id, accuracy, _, split in rows:
        w = accuracy * width
        color = _split_color(split, splits)
        label = _xml(dataset_id)
        parts.append(
            f'<text x="{left - 6}" y="{y + bar_h - 3}" text-anchor="end">{label}</text>'
        )
        parts.append(f'<rect x="{left}" y="{y}" width="{w:.1f}" height="{bar_h}" fill="{color}"/>')
        parts.append(
            f'<text x="{left + w + 4:.1f}" y="{y + bar_h - 3}">{_percent(accuracy)}</text>'
        )
        y += bar_h + gap
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _ratios_svg(rows: list[tuple[str, str, int, str, float]]) -> str:
    """Ratio-versus-shots polylines, one per (method pair, split)."""
    left, top, width, height = 50, 20, 420, 240
    ks = sorted({r[2] for r in rows})
    series: dict[tuple[str, str, str], list[tuple[int, float]]] = {}
    for ovd, cod, k, split, value in sorted(rows):
        series.setdefault((ovd, cod, split), []).append((k, value))
    values = [r[4] for r in rows]
    lo = min(min(values), 1.0) - 0.05
    hi = max(max(values), 1.0) + 0.05

    def sx(k: int) -> float:
        if len(ks) == 1:
            return left + width / 2
        return left + width * ks.index(k) / (len(ks) - 1)

    def sy(v: float) -> float:
        return top + height * (hi - v) / (hi - lo)

    splits = sorted({r[3] for r in rows})
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{left + width + 160}" '
        f'height="{top * 2 + height + 30}" font-family="sans-serif" font-size="11">',
        f'<line x1="{left}" y1="{sy(1.0):.1f}" x2="{left + width}" y2="{sy(1.0):.1f}" '
        f'stroke="#999" stroke-dasharray="4 3"/>',
    ]
    for i, ((ovd, cod, split), points) in enumerate(sorted(series.items())):
        color = _split_color(split, splits)
        coords = " ".join(f"{sx(k):.1f},{sy(v):.1f}" for k, v in points)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        parts.append(
            f'<text x="{left + width + 8}" y="{top + 14 * (i + 1)}" fill="{color}">'
            f"{_xml(ovd)}/{_xml(cod)} {split}</text>"
        )
    for k in ks:
        parts.append(
            f'<text x="{sx(k):.1f}" y="{top + height + 16}" text-anchor="middle">K={k}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _xml(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
