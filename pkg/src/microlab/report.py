"""Persist a result manifest: one JSON summary plus one CSV table per series."""
from __future__ import annotations

import csv
import json
from pathlib import Path

FORMATS = ("table", "summary", "both")
SUMMARY_NAME = "summary.json"


class OutputError(OSError):
    pass


def format_value(x):
    """17 significant digits for floats; other values verbatim."""
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _write(path, writer):
    try:
        with open(path, "w", newline="") as fh:
            writer(fh)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_table(series, path):
    def body(fh):
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(series.columns)
        for row in series.rows():
            out.writerow([format_value(x) for x in row])
    _write(path, body)


def read_table(path):
    """Columns of an emitted table; numeric columns come back as floats."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = {}
    for j, name in enumerate(header):
        raw = [r[j] for r in body]
        try:
            cols[name] = [float(x) for x in raw]
        except ValueError:
            cols[name] = raw
    return header, cols


def emit(manifest, out_dir, formats="both"):
    """Write the manifest into ``out_dir``; returns the written paths."""
    if formats not in FORMATS:
        raise ValueError(f"formats must be one of {', '.join(FORMATS)}, got {formats!r}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    paths = []
    if formats in ("summary", "both"):
        path = out / SUMMARY_NAME
        # json writes floats as their shortest round-trip repr
        _write(path, lambda fh: fh.write(json.dumps(manifest.summary(), indent=2, sort_keys=True) + "\n"))
        paths.append(path)
    if formats in ("table", "both"):
        for name, series in manifest.series.items():
            path = out / f"{name}.csv"
            write_table(series, path)
            paths.append(path)
    return paths
