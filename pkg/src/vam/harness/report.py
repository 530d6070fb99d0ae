"""Experiment reports: JSON for machines, aligned columns for people."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path


def relative_error(estimate: float, reference: float) -> float:
    return (estimate - reference) / abs(reference)


@dataclass
class MethodRow:
    method: str
    variant: str = ""
    granularity: str = "portfolio"
    status: str = "ok"
    delta: float | None = None
    err: float | None = None
    elapsed: float | None = None
    fit_time: float | None = None
    message: str = ""


@dataclass
class SummaryRow:
    method: str
    err_mean: float | None
    err_std: float | None
    runs: int
    failed: int
    status: str = "ok"


@dataclass
class ExperimentReport:
    experiment: str
    baseline: dict
    calibration: dict = field(default_factory=dict)
    rows: list[MethodRow] = field(default_factory=list)
    summary: list[SummaryRow] = field(default_factory=list)
    exports: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add(self, row: MethodRow) -> None:
        self.rows.append(row)

    def row(self, method: str, variant: str = "", granularity: str = "portfolio") -> MethodRow:
        for r in self.rows:
            if r.method == method and r.variant == variant and r.granularity == granularity:
                return r
        raise KeyError((method, variant, granularity))

    def check_consistency(self, tol: float = 1e-12) -> None:
        """Stored relative errors must follow from the stored deltas."""
        ref = self.baseline["delta"]
        for r in self.rows:
            if r.err is None:
                continue
            if abs(relative_error(r.delta, ref) - r.err) > tol * max(1.0, abs(r.err)):
                raise AssertionError(f"inconsistent error for {r.method} {r.variant}")

    def speedup(self, method: str, variant: str = "") -> float | None:
        """Full-portfolio MC time over the whole interpolation pipeline time."""
        try:
            r = self.row(method, variant, "portfolio")
        except KeyError:
            return None
        if r.elapsed is None:
            return None
        pipeline = self.calibration.get("mc_time", 0.0) + (r.fit_time or 0.0) + r.elapsed
        return self.baseline["time"] / pipeline if pipeline > 0 else math.inf

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "baseline": self.baseline,
            "calibration": self.calibration,
            "rows": [asdict(r) for r in self.rows],
            "summary": [asdict(s) for s in self.summary],
            "exports": self.exports,
            "meta": self.meta,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, default=_json_default)
        if path is not None:
            Path(path).write_text(text + "\n", encoding="utf-8")
        return text

    def to_text(self) -> str:
        lines = [f"experiment: {self.experiment}"]
        b = self.baseline
        lines.append(
            f"MC baseline: delta={b['delta']:.6g} (se {b.get('std_error', float('nan')):.3g}), "
            f"{b.get('n_contracts', '?')} contracts, {b.get('time', float('nan')):.2f} s"
        )
        if self.calibration:
            c = self.calibration
            lines.append(f"calibration: {c.get('n_representatives', '?')} representatives, MC {c.get('mc_time', float('nan')):.2f} s")
        if self.rows:
            header = ("method", "variant", "granularity", "err %", "delta", "time s", "status")
            table = [header]
            for r in self.rows:
                table.append(
                    (
                        r.method,
                        r.variant,
                        r.granularity,
                        "*" if r.err is None else f"{100 * r.err:.2f}",
                        "" if r.delta is None else f"{r.delta:.6g}",
                        "" if r.elapsed is None else f"{r.elapsed:.3f}",
                        r.status,
                    )
                )
            lines.extend(_align(table))
        if self.summary:
            table = [("method", "mean err %", "std err %", "runs", "failed")]
            for s in self.summary:
                table.append(
                    (
                        s.method,
                        "*" if s.err_mean is None else f"{100 * s.err_mean:.2f}",
                        "*" if s.err_std is None else f"{100 * s.err_std:.2f}",
                        str(s.runs),
                        str(s.failed),
                    )
                )
            lines.append("")
            lines.extend(_align(table))
        for key, value in self.meta.items():
            if key.startswith("speedup"):
                lines.append(f"{key}: {value:.1f}x" if isinstance(value, float) else f"{key}: {value}")
        return "\n".join(lines) + "\n"


def _align(rows):
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    return ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]


def _json_default(obj):
    try:
        return float(obj)
    except (TypeError, ValueError):
        return str(obj)


WALL_CLOCK_KEYS = {"time", "elapsed", "fit_time", "mc_time", "estimate_time"}


def strip_wall_clock(obj):
    """Report content with every timing field removed, for determinism checks."""
    if isinstance(obj, dict):
        return {k: strip_wall_clock(v) for k, v in obj.items() if k not in WALL_CLOCK_KEYS and not k.startswith("speedup")}
    if isinstance(obj, list):
        return [strip_wall_clock(v) for v in obj]
    return obj
