"""CSV and markdown writers for metrics, benchmark tables and ACE vectors.

Floats are written with ``repr`` so identical runs give identical bytes.
"""

import csv
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np

from acedg.schemas.metrics import METRICS_COLUMNS, RunMetrics

TABLE_COLUMNS = ("target_domain", "method", "mean_acc", "std_acc", "repeats")
SELECTION_COLUMNS = (
    "target_domain", "method", "repeat", "best_epoch", "val_acc", "test_acc", "ace_ratio",
)


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def write_metrics_csv(metrics: RunMetrics, path: str | Path) -> Path:
    """Rewrite metrics.csv with every epoch recorded so far."""
    return _write_rows(Path(path), METRICS_COLUMNS, (e.row() for e in metrics.epochs))


def write_table_csv(rows: Sequence[Sequence[object]], path: str | Path) -> Path:
    return _write_rows(Path(path), TABLE_COLUMNS, ([_fmt(v) for v in row] for row in rows))


def write_selection_csv(rows: Sequence[Sequence[object]], path: str | Path) -> Path:
    return _write_rows(Path(path), SELECTION_COLUMNS, ([_fmt(v) for v in row] for row in rows))


def write_ace_csv(
    sample_ids: np.ndarray,
    classes: np.ndarray,
    ace: np.ndarray,
    path: str | Path,
) -> Path:
    """One row per sample: sample_id, class, c1..cn."""
    header = ["sample_id", "class", *[f"c{j + 1}" for j in range(ace.shape[1])]]
    rows = (
        [int(s), int(c), *[repr(float(v)) for v in vec]]
        for s, c, vec in zip(sample_ids, classes, ace)
    )
    return _write_rows(Path(path), header, rows)


def render_table_markdown(rows: Sequence[Sequence[object]], methods: Sequence[str]) -> str:
    """Accuracy table with one row per target domain and a column per method."""
    cells: dict[str, dict[str, str]] = {}
    for target, method, mean, std, _ in rows:
        cells.setdefault(str(target), {})[str(method)] = f"{100 * float(mean):.1f} ± {100 * float(std):.1f}"
    lines = [
        "| target | " + " | ".join(methods) + " |",
        "|---|" + "---|" * len(methods),
    ]
    for target, by_method in cells.items():
        lines.append(f"| {target} | " + " | ".join(by_method.get(m, "") for m in methods) + " |")
    return "\n".join(lines) + "\n"


def _fmt(value: object) -> str:
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)
