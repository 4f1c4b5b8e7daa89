"""Append-only per-epoch metric log.

Rows are flat dicts; the CLI table printer and the service job-status
endpoint both consume the same rows. Serialization is line-oriented
(JSONL for appends, CSV for final report tables).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path


class MetricLog:
    def __init__(self, rows: list[dict] | None = None):
        self.rows: list[dict] = list(rows or [])

    def append(self, **row) -> dict:
        self.rows.append(row)
        return row

    def extend(self, other: "MetricLog") -> None:
        self.rows.extend(other.rows)

    def tail(self, n: int = 10) -> list[dict]:
        return self.rows[-n:]

    def last(self, key: str, default=None):
        for row in reversed(self.rows):
            if key in row:
                return row[key]
        return default

    def column(self, key: str) -> list:
        return [row[key] for row in self.rows if key in row]

    def append_jsonl(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a") as fh:
            for row in self.rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")

    def to_csv(self, path: str | Path, columns: list[str] | None = None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        if columns is None:
            columns = []
            for row in self.rows:
                for key in row:
                    if key not in columns:
                        columns.append(key)
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: _format_cell(row.get(k, "")) for k in columns})
        return path

    @staticmethod
    def read_jsonl(path: str | Path) -> "MetricLog":
        rows = []
        path = Path(path)
        if path.exists():
            with open(path) as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        rows.append(json.loads(line))
        return MetricLog(rows)


def _format_cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def render_table(rows: list[dict], columns: list[str]) -> str:
    """Fixed-width text table for terminal output."""
    cells = [[_format_cell(row.get(c, "")) for c in columns] for row in rows]
    widths = [max(len(c), *(len(r[i]) for r in cells)) if cells else len(c) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    return "\n".join(lines)
