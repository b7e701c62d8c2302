"""Summary statistics over active-learning runs."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .loop import RunRecord


@dataclass
class SummaryRow:
    dataset: str
    acquisition: str
    n_runs: int
    n_failed: int
    final_median: float
    final_q1: float
    final_q3: float
    auc_median: float
    final_rank: float = float("nan")
    auc_rank: float = float("nan")


@dataclass
class SummaryTable:
    rows: list
    average_ranks: dict  # metric -> {acquisition: mean rank across datasets}

    def row(self, dataset: str, acquisition: str) -> SummaryRow:
        for r in self.rows:
            if r.dataset == dataset and r.acquisition == acquisition:
                return r
        raise KeyError((dataset, acquisition))


def quartiles(values) -> tuple[float, float, float]:
    q1, med, q3 = np.percentile(np.asarray(values, dtype=float), [25, 50, 75])
    return float(q1), float(med), float(q3)


def auc(accuracies) -> float:
    """Area under the accuracy curve, normalised to the mean per-step accuracy."""
    return float(np.mean(accuracies))


def _ranks(values: dict) -> dict:
    keys = sorted(values)
    # rank 1 = best (highest); ties share the average rank
    r = rankdata([-values[k] for k in keys], method="average")
    return dict(zip(keys, (float(x) for x in r)))


def summarize(records: dict, min_runs: int = 2) -> SummaryTable:
    """``records`` maps (dataset, acquisition) to run records."""
    if not records:
        raise ValueError("no records to summarise")
    rows = []
    for (dataset, acq) in sorted(records):
        runs = records[(dataset, acq)]
        ok = [r for r in runs if not r.failed]
        if len(ok) < min_runs:
            raise ValueError(f"{dataset}/{acq}: only {len(ok)} successful runs (need {min_runs})")
        q1, med, q3 = quartiles([r.accuracies[-1] for r in ok])
        _, auc_med, _ = quartiles([auc(r.accuracies) for r in ok])
        rows.append(SummaryRow(dataset, acq, len(ok), len(runs) - len(ok), med, q1, q3, auc_med))
    per_metric = {"final": "final_median", "auc": "auc_median"}
    average: dict = {}
    for metric, attr in per_metric.items():
        collected: dict = {}
        for dataset in sorted({r.dataset for r in rows}):
            subset = {r.acquisition: getattr(r, attr) for r in rows if r.dataset == dataset}
            for acq, rank in _ranks(subset).items():
                setattr(next(r for r in rows if r.dataset == dataset and r.acquisition == acq),
                        f"{metric}_rank", rank)
                collected.setdefault(acq, []).append(rank)
        average[metric] = {acq: float(np.mean(v)) for acq, v in sorted(collected.items())}
    return SummaryTable(rows, average)


def write_summary(table: SummaryTable, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary_path = out / "summary.csv"
    cols = list(SummaryRow.__dataclass_fields__)
    with summary_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in table.rows:
            w.writerow([f"{v:.6f}" if isinstance(v, float) else v for v in (getattr(r, c) for c in cols)])
    ranks_path = out / "ranks.csv"
    with ranks_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "acquisition", "average_rank"])
        for metric, ranks in table.average_ranks.items():
            for acq, v in ranks.items():
                w.writerow([metric, acq, f"{v:.4f}"])
    return summary_path, ranks_path


def curve_quartiles(runs: list[RunRecord]) -> np.ndarray:
    """Per step (median, q1, q3) of accuracy across successful runs; shape (steps, 3)."""
    ok = [r.accuracies for r in runs if not r.failed]
    if not ok:
        raise ValueError("no successful runs")
    acc = np.array(ok, dtype=float)
    q1, med, q3 = np.percentile(acc, [25, 50, 75], axis=0)
    return np.column_stack([med, q1, q3])


def write_plot_csv(records: dict, dataset: str, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "acquisition", "median", "q1", "q3"])
        for (ds, acq) in sorted(records):
            if ds != dataset:
                continue
            for step, (med, q1, q3) in enumerate(curve_quartiles(records[(ds, acq)])):
                w.writerow([step, acq, f"{med:.6f}", f"{q1:.6f}", f"{q3:.6f}"])
    return path
