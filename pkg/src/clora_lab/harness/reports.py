"""CSV report writers and the summary merger.

Numbers are written with ``repr`` so the decimal separator is always a dot,
whatever the process locale.
"""

from __future__ import annotations

import csv
from pathlib import Path

MEASURE_HEADER = ["method", "target", "k", "rank", "lambda", "seed", "capacity", "forgetting"]
CONTINUAL_HEADER = ["stage", "task", "accuracy"]
SWEEP_HEADER = ["k", "capacity", "forgetting", "capacity_std", "forgetting_std", "n_seeds"]


def cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([cell(row.get(col)) for col in header])


def read_rows(path) -> tuple[list, list]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [dict(zip(header, row)) for row in reader]


def measure_rows(cfg, record) -> list:
    """Per-site rows, a ``mean`` row, and the ``reference`` row (output scale of W)."""
    base = {
        "method": cfg.train.method,
        "k": cfg.model.k if cfg.train.method == "clora" else 0,
        "rank": cfg.model.rank,
        "lambda": cfg.model.lam,
        "seed": cfg.train.seed,
    }
    rows = []
    for site, m in sorted(record.per_adapter.items()):
        rows.append({**base, "target": site, "capacity": m.capacity, "forgetting": m.forgetting})
    rows.append({**base, "target": "mean", "capacity": record.model_capacity,
                 "forgetting": record.model_forgetting})
    rows.append({**base, "method": "reference", "target": "mean", "capacity": None,
                 "forgetting": record.reference_forgetting})
    return rows


def write_measure(path, cfg, record) -> None:
    write_rows(path, MEASURE_HEADER, measure_rows(cfg, record))


def write_continual(path, report) -> None:
    rows = [
        {"stage": i + 1, "task": j + 1, "accuracy": float(a)}
        for i, row in enumerate(report.acc)
        for j, a in enumerate(row)
    ]
    write_rows(path, CONTINUAL_HEADER, rows)


def write_sweep(path, rows) -> None:
    write_rows(path, SWEEP_HEADER, [vars(r) for r in rows])


def merge(paths) -> tuple[list, list]:
    """Stack CSV files into one table with a leading ``source`` column."""
    header = ["source"]
    rows = []
    for path in paths:
        cols, body = read_rows(path)
        for col in cols:
            if col not in header:
                header.append(col)
        rows.extend({"source": Path(path).name, **r} for r in body)
    return header, rows


def format_table(header, rows) -> str:
    widths = [max([len(h)] + [len(str(r.get(h, ""))) for r in rows]) for h in header]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(str(r.get(h, "")).ljust(w) for h, w in zip(header, widths)))
    return "\n".join(lines)
