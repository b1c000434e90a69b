"""Structured reports: one record per check, rendered as json-lines or a text table."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, List, Optional

from gmpy2 import mpq

from .powerseries import GaussianRational, Series, SeriesMap

FIELDS = ("check", "inputs", "verdict", "certified_order", "certificate", "seed", "millis")

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_INCONCLUSIVE = 0, 1, 2, 3


def jsonable(value: Any) -> Any:
    """Convert certificates to plain JSON data (exact numbers become strings)."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, (bool, int, str)) or value is None:
        return value
    if isinstance(value, float):
        return round(value, 6)
    if isinstance(value, (GaussianRational, type(mpq(0)))):
        return str(value)
    if isinstance(value, Series):
        return value.pretty(max_terms=40)
    if isinstance(value, SeriesMap):
        return [c.pretty(max_terms=40) for c in value]
    return str(value)


@dataclass
class Record:
    check: str
    inputs: dict
    verdict: str
    certified_order: Optional[int]
    certificate: dict
    outcome: Optional[bool]  # True affirmative, False failed, None inconclusive
    seed: int = 0
    millis: Optional[float] = None

    def to_dict(self) -> dict:
        return {"check": self.check, "inputs": jsonable(self.inputs), "verdict": self.verdict,
                "certified_order": self.certified_order, "certificate": jsonable(self.certificate),
                "seed": self.seed, "millis": None if self.millis is None else round(self.millis, 3)}


@dataclass
class Report:
    command: str
    argv: List[str]
    seed: int
    records: List[Record] = field(default_factory=list)
    figures: List[str] = field(default_factory=list)

    def add(self, check: str, inputs: dict, verdict: str, order: Optional[int], certificate: dict,
            outcome: Optional[bool], millis: Optional[float] = None) -> Record:
        r = Record(check, inputs, verdict, order, certificate, outcome, self.seed, millis)
        self.records.append(r)
        return r

    def add_verdict(self, v, inputs: dict, millis: Optional[float] = None) -> Record:
        """Record a :class:`reflection.Verdict`-like object."""
        return self.add(v.check, inputs, v.verdict, v.order, v.certificate, v.holds, millis)

    def exit_code(self) -> int:
        outcomes = [r.outcome for r in self.records]
        if any(o is False for o in outcomes):
            return EXIT_FAILED
        if any(o is None for o in outcomes):
            return EXIT_INCONCLUSIVE
        return EXIT_OK


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=False, separators=(",", ":"), ensure_ascii=False)


def emit_json_lines(report: Report) -> str:
    header = {"command": report.command, "argv": report.argv, "seed": report.seed,
              "records": len(report.records)}
    lines = [_dumps(header)]
    for r in report.records:
        d = r.to_dict()
        d["inputs"] = json.loads(json.dumps(d["inputs"], sort_keys=True))
        d["certificate"] = json.loads(json.dumps(d["certificate"], sort_keys=True))
        lines.append(_dumps(d))
    return "\n".join(lines) + "\n"


def _short(value, width: int = 70) -> str:
    text = value if isinstance(value, str) else json.dumps(jsonable(value), sort_keys=True, ensure_ascii=False)
    return text if len(text) <= width else text[:width - 3] + "..."


def emit_human(report: Report) -> str:
    out = [f"crforge {report.command}  (seed {report.seed}, {len(report.records)} checks)"]
    if report.records:
        wc = max(len("check"), *(len(r.check) for r in report.records))
        wv = max(len("verdict"), *(len(r.verdict) for r in report.records))
        out.append(f"{'check':<{wc}}  {'verdict':<{wv}}  {'order':>5}  result")
        out.append("-" * (wc + wv + 22))
        for r in report.records:
            status = {True: "ok", False: "FAIL", None: "inconclusive"}[r.outcome]
            order = "-" if r.certified_order is None else str(r.certified_order)
            timing = "" if r.millis is None else f"  ({r.millis:.1f} ms)"
            out.append(f"{r.check:<{wc}}  {r.verdict:<{wv}}  {order:>5}  {status}{timing}")
            if r.inputs:
                out.append(f"    inputs: {_short(r.inputs)}")
            for key in sorted(r.certificate):
                out.append(f"    {key}: {_short(r.certificate[key])}")
    for path in report.figures:
        out.append(f"figure: {path}")
    return "\n".join(out) + "\n"


def emit_report(report: Report, fmt: str = "human") -> str:
    if fmt == "json-lines":
        return emit_json_lines(report)
    if fmt == "human":
        return emit_human(report)
    raise ValueError(f"unknown format {fmt!r}")
