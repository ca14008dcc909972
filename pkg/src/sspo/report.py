"""CSV writing with fixed numeric formatting (9 significant digits)."""

from __future__ import annotations

import csv
import io

import numpy as np


def fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".9g")
    if value is None:
        return ""
    return str(value)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(header, rows))


def metrics_csv(metrics):
    from .trainer import MetricsRow

    return csv_text(MetricsRow.header(), (m.values() for m in metrics))
