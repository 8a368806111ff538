"""Long-format CSV and JSON reports.

Every row is ``(run_id, state, action, metric, value, seed)``.  The only
non-reproducible content, the generation time, lives on the first line so the
body is byte-identical across runs with the same scenario and seed.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, field

COLUMNS = ("run_id", "state", "action", "metric", "value", "seed")


def run_id(command: str, canonical_scenario: str, seed: int, *extra) -> str:
    text = "\x1f".join([command, canonical_scenario, str(seed), *map(str, extra)])
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def _plain(value):
    """numpy scalars to Python scalars, recursively through containers."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "item"):
        return value.item()
    return value


def _fmt(value) -> str:
    value = _plain(value)
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


@dataclass
class Report:
    run_id: str
    seed: int
    rows: list[tuple] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def add(self, metric: str, value, state=None, action=None) -> None:
        self.rows.append((state, action, metric, value))

    def csv_body(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for state, action, metric, value in self.rows:
            w.writerow([self.run_id, _fmt(state), _fmt(action), metric, _fmt(value), self.seed])
        return buf.getvalue()

    def as_json(self) -> dict:
        def conv(v):
            v = _plain(v)
            if isinstance(v, dict):
                return {k: conv(x) for k, x in v.items()}
            if isinstance(v, list):
                return [conv(x) for x in v]
            if isinstance(v, float) and not math.isfinite(v):
                return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
            return v

        rows = [dict(zip(COLUMNS, (self.run_id, state, action, metric, conv(value), self.seed)))
                for state, action, metric, value in self.rows]
        return {"run_id": self.run_id, "seed": self.seed,
                "summary": conv(self.summary), "rows": rows}

    def render(self, fmt: str, timestamp: str | None = None) -> str:
        timestamp = timestamp or dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")
        if fmt == "csv":
            return f"# generated {timestamp}\n" + self.csv_body()
        if fmt == "json":
            doc = {"generated": timestamp, **self.as_json()}
            return json.dumps(doc, indent=2) + "\n"
        raise ValueError(f"unknown format {fmt!r}")

    def write(self, out: str | None, fmt: str) -> None:
        text = self.render(fmt)
        if out is None or out == "-":
            sys.stdout.write(text)
        else:
            with open(out, "w") as fh:
                fh.write(text)
