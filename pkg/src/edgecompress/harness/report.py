"""Compression reports: reductions, serialization and rendering."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from edgecompress.errors import InputError
from edgecompress.profiler import Profile

FORMATS = ("json", "markdown", "csv")


@dataclass(frozen=True)
class Reductions:
    size_pct: float
    params_pct: float
    macs_pct: float
    accuracy_delta_points: float | None

    def to_dict(self) -> dict:
        return asdict(self)


def _reduction(before: float, after: float) -> float:
    return 0.0 if before == 0 else 100.0 * (1.0 - after / before)


def compare(before: Profile, after: Profile) -> Reductions:
    """Percentage reductions from ``before`` to ``after``; accuracy change in points."""
    acc = None
    if before.accuracy_pct is not None and after.accuracy_pct is not None:
        acc = after.accuracy_pct - before.accuracy_pct
    return Reductions(
        size_pct=_reduction(before.size_bytes, after.size_bytes),
        params_pct=_reduction(before.params_m, after.params_m),
        macs_pct=_reduction(before.macs_m, after.macs_m),
        accuracy_delta_points=acc,
    )


@dataclass
class StageRecord:
    name: str
    profile: Profile
    profile_all: Profile
    details: dict = field(default_factory=dict)


@dataclass
class CompressionReport:
    profile_before: Profile
    profile_before_all: Profile
    stages: list[StageRecord]
    config: dict
    complete: bool = True
    error: str | None = None
    timing: dict = field(default_factory=dict)

    @property
    def profile_after(self) -> Profile:
        return self.stages[-1].profile if self.stages else self.profile_before

    @property
    def reductions(self) -> Reductions:
        return compare(self.profile_before, self.profile_after)

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {
            "profile_before": self.profile_before.to_dict(),
            "profile_before_all": self.profile_before_all.to_dict(),
            "stages": [
                {
                    "name": s.name,
                    "profile": s.profile.to_dict(),
                    "profile_all": s.profile_all.to_dict(),
                    "details": s.details,
                    "reductions_vs_before": compare(self.profile_before, s.profile).to_dict(),
                }
                for s in self.stages
            ],
            "profile_after": self.profile_after.to_dict(),
            "reductions": self.reductions.to_dict(),
            "config": self.config,
            "complete": self.complete,
            "error": self.error,
        }
        if include_timing:
            d["timing"] = self.timing
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CompressionReport":
        stages = [
            StageRecord(s["name"], Profile.from_dict(s["profile"]), Profile.from_dict(s["profile_all"]), s.get("details", {}))
            for s in d["stages"]
        ]
        return cls(
            profile_before=Profile.from_dict(d["profile_before"]),
            profile_before_all=Profile.from_dict(d["profile_before_all"]),
            stages=stages,
            config=d["config"],
            complete=d.get("complete", True),
            error=d.get("error"),
            timing=d.get("timing", {}),
        )

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CompressionReport":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------- rendering
def _fmt(v, digits: int = 2) -> str:
    return "n/a" if v is None else f"{v:.{digits}f}"


def _profile_row(label: str, p: Profile) -> str:
    cells = [label, _fmt(p.accuracy_pct), _fmt(p.size_mb), _fmt(p.params_m), _fmt(p.macs_m), _fmt(p.nonzero_params_m)]
    return "| " + " | ".join(cells) + " |"


def to_markdown(report: CompressionReport) -> str:
    lines = [
        f"Counting convention: {report.profile_before.counting_convention}",
        "",
        "| Model | Accuracy (%) | Size (MB) | Params (M) | MACs (M) | Non-zero params (M) |",
        "|---|---|---|---|---|---|",
        _profile_row("Full", report.profile_before),
    ]
    lines += [_profile_row(s.name, s.profile) for s in report.stages]
    r = report.reductions
    lines += [
        "",
        "| Accuracy change (points) | Size reduction | Params reduction | MACs reduction |",
        "|---|---|---|---|",
        f"| {_fmt(r.accuracy_delta_points)} | {_fmt(r.size_pct)}% | {_fmt(r.params_pct)}% | {_fmt(r.macs_pct)}% |",
    ]
    if not report.complete:
        lines += ["", f"INCOMPLETE: {report.error}"]
    return "\n".join(lines) + "\n"


CSV_COLUMNS = (
    "stage",
    "accuracy_pct",
    "size_bytes",
    "params_m",
    "macs_m",
    "nonzero_params_m",
    "size_pct",
    "params_pct",
    "macs_pct",
    "accuracy_delta_points",
)


def to_csv(report: CompressionReport) -> str:
    """One row per stage; reductions are relative to the uncompressed model."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in report.stages:
        p, r = s.profile, compare(report.profile_before, s.profile)
        row = [s.name, p.accuracy_pct, p.size_bytes, p.params_m, p.macs_m, p.nonzero_params_m]
        row += [r.size_pct, r.params_pct, r.macs_pct, r.accuracy_delta_points]
        w.writerow(["" if v is None else v for v in row])
    return buf.getvalue()


def emit_report(report: CompressionReport, fmt: str = "json", path: str | Path | None = None) -> str:
    """Render ``report``; also write it to ``path`` when given."""
    if fmt == "json":
        text = report.to_json()
    elif fmt == "markdown":
        text = to_markdown(report)
    elif fmt == "csv":
        text = to_csv(report)
    else:
        raise InputError(f"format must be one of {FORMATS}, got {fmt!r}")
    if path is not None:
        Path(path).write_text(text)
    return text
