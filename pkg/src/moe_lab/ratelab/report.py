"""Report serialization: JSON document plus long and summary CSV tables."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from .runner import CellResult, RateReport, Summary, slopes_for, summarize

LONG_HEADER = ["scenario", "case", "n", "rep", "metric", "value", "seed"]
SUMMARY_HEADER = ["scenario", "case", "n", "reps", "metric", "mean", "stderr", "median"]


def _fmt(v) -> str:
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def emit_csv(report: RateReport | None, path, summary_path=None) -> None:
    """Write the long table to ``path`` and, if given, the per-n summary table."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(LONG_HEADER)
        for s in report.per_n if report else []:
            for c in s.cells:
                for metric, value in c.metrics.items():
                    w.writerow([report.scenario, report.case, c.n, c.rep, metric, _fmt(value), c.seed])
    if summary_path is not None:
        with open(summary_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(SUMMARY_HEADER)
            for s in report.per_n if report else []:
                for metric in s.mean:
                    w.writerow([report.scenario, report.case, s.n, s.reps, metric,
                                _fmt(s.mean[metric]), _fmt(s.stderr[metric]), _fmt(s.median[metric])])


def read_long_csv(path) -> dict:
    """``{(n, rep): {metric: value}}`` plus seeds, as stored by :func:`emit_csv`."""
    cells = defaultdict(dict)
    seeds = {}
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.DictReader(fh)
        if rows.fieldnames != LONG_HEADER:
            raise ValueError(f"{path}: unexpected header {rows.fieldnames}")
        for row in rows:
            key = (int(row["n"]), int(row["rep"]))
            cells[key][row["metric"]] = float(row["value"])
            seeds[key] = int(row["seed"])
    return {"cells": dict(cells), "seeds": seeds}


def summaries_from_long_csv(path) -> list:
    """Rebuild per-n summaries (and hence slopes) from a long CSV."""
    parsed = read_long_csv(path)
    by_n = defaultdict(list)
    for (n, rep), metrics in sorted(parsed["cells"].items()):
        by_n[n].append(CellResult(n, rep, parsed["seeds"][(n, rep)], metrics, True, 0, 0.0, {}))
    return [summarize(n, by_n[n]) for n in sorted(by_n)]


def refit_from_long_csv(path) -> dict:
    return slopes_for(summaries_from_long_csv(path))


def write_report_json(report: RateReport, path) -> None:
    doc = report.to_json()
    Path(path).write_text(json.dumps(doc, indent=2, allow_nan=True) + "\n", encoding="utf-8")


def read_report_json(path) -> RateReport:
    from .slopes import SlopeFit

    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    per_n = []
    for s in doc["per_n"]:
        cells = [CellResult(**c) for c in s.get("cells", [])]
        per_n.append(Summary(s["n"], s["reps"], s["mean"], s["stderr"], s["median"],
                             s["n_unconverged"], s["unreliable"], cells))
    slopes = {k: SlopeFit(**v) if v is not None else None for k, v in doc["slopes"].items()}
    return RateReport(doc["scenario"], doc["case"], per_n, slopes, doc["provenance"])


def slope_table(report: RateReport, metrics=None) -> str:
    """Plain-text slope summary, one metric per line."""
    metrics = metrics or [m for m in report.slopes if report.slopes[m] is not None]
    lines = [f"{report.scenario}/{report.case}"]
    for m in metrics:
        fit = report.slopes.get(m)
        if fit is None:
            lines.append(f"  {m:<16} slope=   n/a")
        else:
            lines.append(f"  {m:<16} slope={fit.slope:+.3f}  intercept={fit.intercept:+.3f}  r2={fit.r2:.3f}")
    return "\n".join(lines)


def mean_curve(report: RateReport, metric: str):
    pts = report.means(metric)
    return np.array([p[0] for p in pts], dtype=float), np.array([p[1] for p in pts], dtype=float)
