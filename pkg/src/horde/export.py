"""Plot-ready exports from run directories.

Chain runs produce ``mspbe_comparison.csv``: the per-episode true, sample,
vector, and scalar MSPBE columns averaged over all runs in the directory.

Stream runs produce one wide CSV per metric (per-question columns plus an
across-question ``mean`` column): ``mspbe_vector_by_step.csv`` and
``mspbe_scalar_by_step.csv`` indexed by the logged step, and
``nmsre_by_excursion.csv`` indexed by the number of relevant test
excursions each question has observed, with the return variance recomputed
exactly over all recorded excursion starts.
"""

from __future__ import annotations

import csv
import glob
import os
from collections import defaultdict

import numpy as np

from .errors import InputError
from .evaluation import ExponentialTrace

__all__ = ["export_curves", "read_metric_log", "nmsre_by_excursion"]


def _fmt(x) -> str:
    return repr(float(x))


def read_metric_log(path: str) -> dict[str, dict[str, list]]:
    """metric CSV -> {question_id: {column: [values...]}} preserving order."""
    out: dict[str, dict[str, list]] = defaultdict(lambda: defaultdict(list))
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            q = out[row["question_id"]]
            q["step"].append(int(row["step"]))
            for col in ("nmsre", "mspbe_vector", "mspbe_scalar", "mspbe_sample", "mspbe_true"):
                q[col].append(float(row[col]) if row[col] != "" else np.nan)
    return out


def read_excursions(path: str) -> dict[str, list[tuple[float, float]]]:
    """excursion CSV -> {question_id: [(prediction, g_hat), ...]} in order."""
    out: dict[str, list[tuple[float, float]]] = defaultdict(list)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out[row["question_id"]].append((float(row["prediction"]), float(row["g_hat"])))
    return out


def nmsre_by_excursion(records: dict[str, list[tuple[float, float]]], tau: float = 20.0):
    """Exact NMSRE series per question, indexed by relevant-excursion count.

    The normalizing variance uses every recorded return for the question
    (the offline definition); the error trace is replayed in order, so
    entry k is the NMSRE right after the k-th relevant excursion.
    """
    series: dict[str, np.ndarray] = {}
    for qid, pairs in records.items():
        g = np.array([p[1] for p in pairs])
        var = float(np.var(g, ddof=1)) if g.size >= 2 else 0.0
        tr = ExponentialTrace(tau)
        vals = np.empty(len(pairs))
        for k, (pred, ghat) in enumerate(pairs):
            tr.update((pred - ghat) ** 2)
            vals[k] = tr.value / var if var > 0.0 else 1.0
        series[qid] = vals
    return series


def _write_wide(path: str, index_name: str, index, columns: dict[str, np.ndarray]):
    """One wide CSV: index column, per-question columns, then their mean.

    Rows where a question has no value yet carry an empty cell; the mean
    averages the cells present in that row.
    """
    qids = list(columns)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join([index_name] + qids + ["mean"]) + "\n")
        for i, idx in enumerate(index):
            cells, present = [], []
            for qid in qids:
                col = columns[qid]
                if i < len(col) and not np.isnan(col[i]):
                    cells.append(_fmt(col[i]))
                    present.append(col[i])
                else:
                    cells.append("")
            mean = _fmt(np.mean(present)) if present else ""
            fh.write(",".join([str(idx)] + cells + [mean]) + "\n")


def export_curves(run_dir: str, out_dir: str | None = None) -> list[str]:
    """Export plot-ready series from a run directory; returns written paths."""
    out_dir = out_dir or os.path.join(run_dir, "exports")
    os.makedirs(out_dir, exist_ok=True)
    metric_files = sorted(glob.glob(os.path.join(run_dir, "metrics_*.csv")))
    if not metric_files:
        raise InputError(f"no metric logs found in {run_dir}")
    written = []

    logs = [read_metric_log(p) for p in metric_files]
    if "chain" in logs[0]:
        path = os.path.join(out_dir, "mspbe_comparison.csv")
        cols = ("mspbe_true", "mspbe_sample", "mspbe_vector", "mspbe_scalar")
        stacked = {
            c: np.mean([np.array(log["chain"][c]) for log in logs], axis=0) for c in cols
        }
        episodes = logs[0]["chain"]["step"]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("episode,true,sample,vector,scalar\n")
            for i, ep in enumerate(episodes):
                fh.write(
                    ",".join(
                        [str(ep)] + [_fmt(stacked[c][i]) for c in cols]
                    )
                    + "\n"
                )
        written.append(path)
        return written

    # stream run: one log per directory
    log = logs[0]
    qids = list(log)
    steps = log[qids[0]]["step"]
    for metric, fname in (
        ("mspbe_vector", "mspbe_vector_by_step.csv"),
        ("mspbe_scalar", "mspbe_scalar_by_step.csv"),
        ("nmsre", "nmsre_by_step.csv"),
    ):
        columns = {qid: np.array(log[qid][metric]) for qid in qids}
        if all(np.all(np.isnan(c)) for c in columns.values()):
            continue
        path = os.path.join(out_dir, fname)
        _write_wide(path, "step", steps, columns)
        written.append(path)

    exc_files = sorted(glob.glob(os.path.join(run_dir, "excursions_*.csv")))
    if exc_files:
        records = read_excursions(exc_files[0])
        if records:
            series = nmsre_by_excursion(records)
            longest = max(len(v) for v in series.values())
            path = os.path.join(out_dir, "nmsre_by_excursion.csv")
            _write_wide(
                path,
                "relevant_excursions",
                range(1, longest + 1),
                {qid: v for qid, v in series.items()},
            )
            written.append(path)
    return written
