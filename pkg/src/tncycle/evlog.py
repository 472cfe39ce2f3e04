"""Per-step evolution records, CSV export and JSON run summaries."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import TensorShapeError

CSV_COLUMNS_1D = ("step", "i_re", "n_re", "energy", "mz", "truncation_weight", "wall_seconds")
CSV_COLUMNS_2D = CSV_COLUMNS_1D + ("ctm_sweeps", "cost_final")


@dataclass
class EvolutionLog:
    """Append-only log of evolution steps plus free-form events."""

    columns: tuple = CSV_COLUMNS_1D
    rows: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def append(self, **fields) -> None:
        step = fields.get("step")
        if self.rows and step is not None and step <= self.rows[-1].get("step", -1):
            raise TensorShapeError(
                f"log steps must be strictly increasing: got {step} after {self.rows[-1]['step']}"
            )
        self.rows.append({col: fields.get(col) for col in self.columns})

    def event(self, message: str) -> None:
        self.events.append({"time": time.time(), "message": message})

    def last(self, column: str):
        for row in reversed(self.rows):
            if row.get(column) is not None:
                return row[column]
        return None

    def write_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow(
                    ["" if row[c] is None else repr(row[c]) if isinstance(row[c], float) else row[c]
                     for c in self.columns]
                )

    def summary(self, config: dict | None = None) -> dict:
        final = {
            "energy": self.last("energy"),
            "mz": self.last("mz"),
            "truncation_weight": self.last("truncation_weight"),
            "steps": self.rows[-1]["step"] if self.rows else 0,
            "environment_computations": self.last("i_re"),
            "wall_seconds_total": float(
                sum(r["wall_seconds"] or 0.0 for r in self.rows)
            ),
        }
        return {
            "final": final,
            "config": dict(config or {}),
            "events": [e["message"] for e in self.events],
        }

    def write_summary(self, path, config: dict | None = None) -> dict:
        obj = self.summary(config)
        Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True))
        return obj
