"""Leave-one-domain-out benchmark of ERM against Contrastive-ACE."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from acedg.deps.config import settings
from acedg.models.dataset import DomainDataset
from acedg.schemas.metrics import RunMetrics
from acedg.schemas.train import TrainConfig
from acedg.services.data_service import DatasetSizeError
from acedg.services.report_service import (
    render_table_markdown,
    write_selection_csv,
    write_table_csv,
)
from acedg.services.training_service import prepare_split, train

logger = logging.getLogger(__name__)

ERM = "erm"
CONTRASTIVE_ACE = "contrastive-ace"
METHODS = (ERM, CONTRASTIVE_ACE)
AVERAGE_ROW = "avg"


@dataclass(frozen=True, order=True)
class BenchCell:
    """One (target domain, method, repeat) training run."""

    target_domain: int
    method: str
    repeat: int

    @property
    def run_name(self) -> str:
        return f"{self.target_domain}_{self.method}_{self.repeat}"


@dataclass
class BenchReport:
    """Accuracy table, per-run selection rows and the raw run metrics."""

    table: list[tuple] = field(default_factory=list)
    selection: list[tuple] = field(default_factory=list)
    runs: dict[BenchCell, RunMetrics] = field(default_factory=dict)

    def cell(self, target: int | str, method: str) -> tuple | None:
        for row in self.table:
            if row[0] == target and row[1] == method:
                return row
        return None


def cell_config(config: TrainConfig, cell: BenchCell) -> TrainConfig:
    """Seeds offset by the repeat; ERM is the same run with rho forced to 0."""
    cfg = config.for_repeat(cell.repeat)
    return cfg.as_erm() if cell.method == ERM else cfg


def _run_cell(config: TrainConfig, dataset: DomainDataset, cell: BenchCell, out_dir: Path | None) -> RunMetrics:
    cfg = cell_config(config, cell)
    prepared = prepare_split(cfg, dataset, cell.target_domain)
    metrics_path = out_dir / "runs" / cell.run_name / "metrics.csv" if out_dir is not None else None
    _, metrics = train(cfg, prepared.split, metrics_path=metrics_path)
    logger.info(
        "cell %s done: best_epoch=%s val_acc=%.4f test_acc=%.4f",
        cell.run_name, metrics.best_epoch, metrics.best_val_acc, metrics.selected_test_acc,
    )
    return metrics


def _std(values: list[float]) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def _table_rows(domains: list[int], repeats: int, runs: dict[BenchCell, RunMetrics]) -> list[tuple]:
    rows: list[tuple] = []
    for target in domains:
        for method in METHODS:
            accs = [runs[BenchCell(target, method, r)].selected_test_acc for r in range(repeats)]
            rows.append((target, method, float(np.mean(accs)), _std(accs), repeats))
    for method in METHODS:
        # one average over domains per repeat, then spread across repeats
        per_repeat = [
            float(np.mean([runs[BenchCell(t, method, r)].selected_test_acc for t in domains]))
            for r in range(repeats)
        ]
        rows.append((AVERAGE_ROW, method, float(np.mean(per_repeat)), _std(per_repeat), repeats))
    return rows


def _selection_rows(runs: dict[BenchCell, RunMetrics]) -> list[tuple]:
    return [
        (
            cell.target_domain, cell.method, cell.repeat, m.best_epoch,
            m.best_val_acc, m.selected_test_acc, m.selected_ace_ratio,
        )
        for cell, m in sorted(runs.items(), key=lambda item: (item[0].target_domain, METHODS.index(item[0].method), item[0].repeat))
    ]


def bench_leave_one_out(
    config: TrainConfig,
    dataset: DomainDataset,
    out_dir: str | Path | None = None,
    num_threads: int | None = None,
) -> BenchReport:
    """
    Train ERM and Contrastive-ACE with every domain held out in turn.

    Cells share nothing mutable and run on a thread pool; results are merged
    by cell key so the report does not depend on completion order.

    Args:
        config: Base configuration; each repeat offsets all seeds
        dataset: Multi-domain dataset
        out_dir: Where table.csv, selection.csv, table.md and runs/ go; nothing
            is written when None
        num_threads: Worker count; ``settings.NUM_THREADS`` when None

    Returns:
        BenchReport with rows in domain-id order followed by the average rows

    Raises:
        DatasetSizeError: If the dataset has fewer than two domains
    """
    domains = sorted(int(d) for d in dataset.domain_ids)
    if len(domains) < 2:
        raise DatasetSizeError(f"leave-one-out needs at least 2 domains, got {len(domains)}")

    out = Path(out_dir) if out_dir is not None else None
    cells = [
        BenchCell(target, method, r)
        for target in domains for method in METHODS for r in range(config.repeats)
    ]
    workers = num_threads or settings.NUM_THREADS
    logger.info("Running %d benchmark cells on %d thread(s)", len(cells), workers)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {cell: pool.submit(_run_cell, config, dataset, cell, out) for cell in cells}
        runs = {cell: future.result() for cell, future in futures.items()}

    report = BenchReport(
        table=_table_rows(domains, config.repeats, runs),
        selection=_selection_rows(runs),
        runs=runs,
    )
    if out is not None:
        write_table_csv(report.table, out / "table.csv")
        write_selection_csv(report.selection, out / "selection.csv")
        (out / "table.md").write_text(render_table_markdown(report.table, METHODS), encoding="utf-8")
    return report
