"""Experiment reports and the frozen-constant file."""

from __future__ import annotations

import csv
import io
import json
import math
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

SCHEMA_VERSION = 1
MODES = ("upper", "lower", "band", "record")
DEFAULT_FROZEN = Path(__file__).resolve().parent.parent / "data" / "frozen.json"


@dataclass
class Metric:
    """A measured quantity with the bound it probes and how it is regression-checked.

    ``upper``: fails above ``frozen * (1 + tolerance) + atol``.
    ``lower``: fails below ``frozen - tolerance * |frozen| - atol``.
    ``band``: fails outside ``[band[0] * frozen, band[1] * frozen]`` (widened by ``atol``).
    ``record``: reported only.

    ``grid_stable`` is False for metrics measured on entries that are not
    band-limited (deltas, indicators); those legitimately move when the grid
    is refined and are excluded from the refinement contract.
    """

    id: str
    value: float
    label: str
    mode: str = "upper"
    tolerance: float = 0.25
    atol: float = 0.0
    band: tuple[float, float] | None = None
    frozen: float | None = None
    status: str = "unfrozen"
    grid_stable: bool = True

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown metric mode {self.mode!r}")
        if self.mode == "band" and self.band is None:
            raise ValueError("band metrics need band factors")
        self.value = float(self.value)

    def check(self, frozen: float) -> bool:
        v = self.value
        if not math.isfinite(v):
            return False
        if self.mode == "upper":
            return v <= frozen * (1 + self.tolerance) + self.atol
        if self.mode == "lower":
            return v >= frozen - self.tolerance * abs(frozen) - self.atol
        if self.mode == "band":
            lo, hi = sorted((self.band[0] * frozen, self.band[1] * frozen))
            return lo - self.atol <= v <= hi + self.atol
        return True

    def to_dict(self) -> dict:
        d = {
            "value": self.value,
            "label": self.label,
            "mode": self.mode,
            "tolerance": self.tolerance,
            "frozen": self.frozen,
            "status": self.status,
        }
        if self.atol:
            d["atol"] = self.atol
        if self.band is not None:
            d["band"] = list(self.band)
        if not self.grid_stable:
            d["grid_stable"] = False
        return d


@dataclass
class ExperimentReport:
    experiment: str
    parameters: dict
    entries: dict = field(default_factory=dict)
    metrics: list[Metric] = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    rows: list[dict] = field(default_factory=list)
    runtime: float = 0.0

    def metric(self, id: str) -> Metric:
        for m in self.metrics:
            if m.id == id:
                return m
        raise KeyError(id)

    def add(self, id: str, value: float, label: str, **kw) -> Metric:
        m = Metric(f"{self.experiment}.{id}", value, label, **kw)
        self.metrics.append(m)
        return m

    @property
    def passed(self) -> bool:
        """No metric regressed against its frozen value (flags are informational)."""
        return all(m.status != "fail" for m in self.metrics)

    def to_dict(self) -> dict:
        # runtime is kept out so that reports are reproducible byte for byte
        return {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "parameters": self.parameters,
            "entries": self.entries,
            "metrics": {m.id: m.to_dict() for m in self.metrics},
            "flags": self.flags,
            "passed": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        rows = self.rows or [{"metric": m.id, "value": m.value, "frozen": m.frozen, "status": m.status} for m in self.metrics]
        cols: list[str] = []
        for r in rows:
            cols += [c for c in r if c not in cols]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
        return buf.getvalue()

    def timing(self) -> dict:
        return {"experiment": self.experiment, "runtime_seconds": self.runtime}


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, tuples become lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return _clean(obj.item())
    return obj


# ---------------------------------------------------------------------------
# frozen constants


def commit_id(path: Path | None = None) -> str:
    """Current git commit of the package checkout, or ``"uncommitted"``."""
    where = Path(__file__).resolve().parent if path is None else path
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"], cwd=where, capture_output=True, text=True, timeout=10, check=True
        )
        return out.stdout.strip() or "uncommitted"
    except (OSError, subprocess.SubprocessError):
        return "uncommitted"


def frozen_key(metric_id: str, grid_exponent: int | None) -> str:
    return metric_id if grid_exponent is None else f"{metric_id}@g{grid_exponent}"


def load_frozen(path: Path | str | None = None) -> dict:
    path = DEFAULT_FROZEN if path is None else Path(path)
    if not path.exists():
        return {}
    return json.loads(path.read_text())


def lookup(frozen: dict, metric_id: str, grid_exponent: int | None) -> dict | None:
    """Grid-specific entry first, then the grid-independent one."""
    return frozen.get(frozen_key(metric_id, grid_exponent)) or frozen.get(metric_id)


def apply_frozen(report: ExperimentReport, frozen: dict, grid_exponent: int | None) -> list[str]:
    """Set ``frozen`` and ``status`` on every metric; returns the ids that regressed."""
    bad = []
    for m in report.metrics:
        if m.mode == "record":
            m.status = "record"
            continue
        entry = lookup(frozen, m.id, grid_exponent)
        if entry is None:
            m.frozen, m.status = None, "unfrozen"
            continue
        m.frozen = float(entry["value"])
        ok = m.check(m.frozen)
        m.status = "pass" if ok else "fail"
        if not ok:
            bad.append(m.id)
    return bad


def freeze(reports: list[ExperimentReport], frozen: dict, grid_exponent: int | None, provenance: str) -> dict:
    """Record every checked metric of ``reports`` under its grid-specific key."""
    out = dict(frozen)
    for r in reports:
        for m in r.metrics:
            if m.mode == "record":
                continue
            entry = {"value": m.value, "tolerance": m.tolerance, "mode": m.mode, "provenance": provenance}
            if m.atol:
                entry["atol"] = m.atol
            if m.band is not None:
                entry["band"] = list(m.band)
            out[frozen_key(m.id, grid_exponent)] = entry
    return dict(sorted(out.items()))


def write_frozen(frozen: dict, path: Path | str | None = None) -> Path:
    path = DEFAULT_FROZEN if path is None else Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(frozen), indent=2, sort_keys=True) + "\n")
    return path
