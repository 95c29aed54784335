"""JSON and CSV report assembly."""

import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .constants import EXIT_FAILURE, EXIT_OK, REPORT_SCHEMA

log = logging.getLogger(__name__)


def jsonable(obj):
    """Convert numpy values and dataclass reports into plain JSON data.

    Non-finite floats become null.
    """
    if hasattr(obj, "to_json"):
        return jsonable(obj.to_json())
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


@dataclass
class ProbeReport:
    """Outcome of one numerical probe over a t-grid."""
    kind: str
    passed: bool
    t_grid: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    fitted_slope: float | None = None
    exact: bool = False
    extrapolated_value: object = None
    predicted_value: object = None
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "kind": self.kind,
            "t_grid": self.t_grid,
            "residuals": self.residuals,
            "fitted_slope": self.fitted_slope,
            "exact": self.exact,
            "extrapolated_value": self.extrapolated_value,
            "predicted_value": self.predicted_value,
            "pass": self.passed,
        }
        out.update(self.details)
        return jsonable(out)

    def csv_rows(self) -> list[dict]:
        return [{"probe": self.kind, "t": t, "residual": r}
                for t, r in zip(self.t_grid, self.residuals)]


@dataclass
class Check:
    """One named pass/fail entry of a verification run."""
    name: str
    passed: bool
    residual: float | None = None
    details: dict = field(default_factory=dict)
    probe: ProbeReport | None = None

    @classmethod
    def from_probe(cls, name: str, probe: ProbeReport, residual: float | None = None,
                   **details) -> "Check":
        return cls(name, probe.passed, residual, dict(details), probe)

    def to_json(self) -> dict:
        out = {"name": self.name, "pass": self.passed, "residual": self.residual}
        out.update(self.details)
        if self.probe is not None:
            out["probe"] = self.probe.to_json()
        return jsonable(out)


@dataclass
class Report:
    """Top-level command output."""
    command: str
    geometry: str
    checks: list[Check] = field(default_factory=list)
    data: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.passed else EXIT_FAILURE

    def failing(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_json(self, timestamp: bool = True) -> dict:
        out = {
            "schema": REPORT_SCHEMA,
            "command": self.command,
            "geometry": self.geometry,
            "pass": self.passed,
            "checks": [c.to_json() for c in self.checks],
        }
        out.update(self.data)
        if timestamp:
            out["generated_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
        return jsonable(out)

    def csv_rows(self) -> list[dict]:
        rows = []
        for c in self.checks:
            if c.probe is not None:
                rows.extend({"check": c.name, **r} for r in c.probe.csv_rows())
        for v in self.data.values():
            if isinstance(v, ProbeReport):
                rows.extend({"check": self.command, **r} for r in v.csv_rows())
        return rows


def dumps(report: Report, timestamp: bool = True) -> str:
    return json.dumps(report.to_json(timestamp), sort_keys=True, indent=2) + "\n"


def write_report(report: Report, path: str | None = None):
    """Write JSON to path, or to stdout when path is None."""
    text = dumps(report)
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        log.info("Wrote report to %s", path)


def write_csv(report: Report, path: str):
    """Export the t-grid tables of every probe in the report."""
    rows = report.csv_rows()
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=["check", "probe", "t", "residual"])
        writer.writeheader()
        for row in rows:
            writer.writerow({k: jsonable(v) for k, v in row.items()})
    log.info("Wrote %d t-grid rows to %s", len(rows), path)
