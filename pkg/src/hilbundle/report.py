"""Measured-vs-bound check records and the report that collects them."""
from __future__ import annotations

import json
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Iterable

REPORT_SCHEMA_VERSION = "1.0"

# default tolerances
TOL_ALGEBRAIC = 1e-12
TOL_IDENTITY = 1e-10
TOL_LINALG = 1e-8


@dataclass
class Check:
    """One measured quantity compared against a bound.

    ``relation`` reads ``measured <relation> bound``; the comparison
    allows ``tolerance`` of slack except for the strict ``"<"`` relation,
    where the tolerance is subtracted from the bound instead.
    """

    name: str
    anchor: str
    measured: float
    bound: float | None
    tolerance: float
    passed: bool
    relation: str = "<="
    details: dict[str, Any] = field(default_factory=dict)
    wall_time: float | None = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        bound = "-" if self.bound is None else f"{self.bound:.6g}"
        return (f"[{status}] {self.name}: measured={self.measured:.6g} {self.relation} "
                f"bound={bound} (tol={self.tolerance:g})")


def _finite(x) -> float:
    x = float(x)
    return x if math.isfinite(x) else math.inf


def check_le(name: str, anchor: str, measured, bound, tol: float = 0.0, **details) -> Check:
    measured, bound = _finite(measured), _finite(bound)
    return Check(name, anchor, measured, bound, tol, measured <= bound + tol, "<=", details)


def check_lt(name: str, anchor: str, measured, bound, tol: float = 0.0, **details) -> Check:
    measured, bound = _finite(measured), _finite(bound)
    return Check(name, anchor, measured, bound, tol, measured < bound - tol, "<", details)


def check_ge(name: str, anchor: str, measured, bound, tol: float = 0.0, **details) -> Check:
    measured, bound = _finite(measured), _finite(bound)
    return Check(name, anchor, measured, bound, tol, measured >= bound - tol, ">=", details)


def check_close(name: str, anchor: str, measured, target, tol: float, **details) -> Check:
    """Pass iff ``|measured - target| <= tol``; ``measured`` is reported as given."""
    measured, target = _finite(measured), _finite(target)
    ok = abs(measured - target) <= tol
    return Check(name, anchor, measured, target, tol, ok, "~=", details)


def check_flag(name: str, anchor: str, ok: bool, measured: float = math.nan, **details) -> Check:
    return Check(name, anchor, float(measured), None, 0.0, bool(ok), "is", details)


@dataclass
class Table:
    header: list[str]
    rows: list[list[Any]] = field(default_factory=list)


@dataclass
class CheckReport:
    checks: list[Check] = field(default_factory=list)
    scenario: dict[str, Any] = field(default_factory=dict)
    version: str = ""
    tables: dict[str, Table] = field(default_factory=dict)
    figures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __iter__(self):
        return iter(self.checks)

    def __len__(self):
        return len(self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def names(self) -> list[str]:
        return [c.name for c in self.checks]

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def extend(self, other: "CheckReport | Iterable[Check]", prefix: str = "") -> None:
        items = other.checks if isinstance(other, CheckReport) else list(other)
        for c in items:
            if prefix:
                c.name = f"{prefix}.{c.name}"
            self.checks.append(c)
        if isinstance(other, CheckReport):
            for key, table in other.tables.items():
                self.tables[f"{prefix}.{key}" if prefix else key] = table

    @contextmanager
    def timed(self):
        """Stamp every check added inside the block with the block's wall time."""
        start_len = len(self.checks)
        t0 = time.perf_counter()
        yield self
        elapsed = time.perf_counter() - t0
        for c in self.checks[start_len:]:
            if c.wall_time is None:
                c.wall_time = elapsed

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def summary(self) -> str:
        lines = [c.line() for c in self.checks]
        n_fail = len(self.failures())
        lines.append(f"{len(self.checks) - n_fail}/{len(self.checks)} checks passed")
        return "\n".join(lines)

    def to_dict(self, timings: bool = False, digits: int = 12) -> dict[str, Any]:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "artifact_version": self.version,
            "scenario": self.scenario,
            "passed": self.passed,
            "checks": [_check_dict(c, timings, digits) for c in self.checks],
        }

    def to_json(self, timings: bool = False) -> str:
        return json.dumps(self.to_dict(timings), indent=2, sort_keys=False) + "\n"


def _round(x, digits):
    if x is None:
        return None
    if isinstance(x, bool):
        return x
    if isinstance(x, int):
        return x
    if isinstance(x, float):
        if not math.isfinite(x):
            return str(x)
        return float(f"{x:.{digits}g}")
    if isinstance(x, dict):
        return {k: _round(v, digits) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round(v, digits) for v in x]
    try:
        return _round(float(x), digits)
    except (TypeError, ValueError):
        return str(x)


def _check_dict(c: Check, timings: bool, digits: int) -> dict[str, Any]:
    return {
        "name": c.name,
        "anchor": c.anchor,
        "measured": _round(c.measured, digits),
        "relation": c.relation,
        "bound": _round(c.bound, digits),
        "tolerance": c.tolerance,
        "passed": c.passed,
        "wall_time_s": _round(c.wall_time, 4) if timings else None,
        "details": _round(c.details, digits),
    }


def _margin(c: Check) -> float:
    if c.bound is None or not math.isfinite(c.bound) or not math.isfinite(c.measured):
        return 0.0
    if c.relation == ">=":
        return c.bound - c.measured
    if c.relation == "~=":
        return abs(c.measured - c.bound)
    return c.measured - c.bound


def merge_worst(reports: "Iterable[CheckReport]", label: str = "items") -> CheckReport:
    """Collapse same-named checks from several reports into their worst instance.

    A failing check beats a passing one; otherwise the smallest margin to
    the bound wins.  The number of merged items and failures is recorded.
    """
    reports = list(reports)
    merged = CheckReport()
    order: list[str] = []
    groups: dict[str, list[Check]] = {}
    for rep in reports:
        for c in rep.checks:
            if c.name not in groups:
                order.append(c.name)
                groups[c.name] = []
            groups[c.name].append(c)
        for key, table in rep.tables.items():
            merged.tables.setdefault(key, table)
    for name in order:
        checks = groups[name]
        worst = max(checks, key=lambda c: (not c.passed, _margin(c)))
        times = [c.wall_time for c in checks if c.wall_time is not None]
        merged.add(Check(worst.name, worst.anchor, worst.measured, worst.bound, worst.tolerance,
                         all(c.passed for c in checks), worst.relation,
                         dict(worst.details, **{label: len(checks),
                                                "failed": sum(not c.passed for c in checks)}),
                         sum(times) if times else None))
    return merged
