"""Line-oriented constraint DSL.

Grammar (one statement per line or separated by ';', '#' starts a comment,
metric names and keywords are case-insensitive)::

    power <= 3W              hard numeric bound; also >=, =, ≤, ≥
    accuracy >= 96%
    area <= 5000um2
    tech = 7nm
    size in {32, 64}
    device in {PCM, MRAM}    categorical set; device = PCM also works
    minimize power weight=2  soft objective, weight defaults to 1
    maximize accuracy
    tiebreak area, power     ordered tie-break metrics
    nearest-infeasible       rank violators when nothing is feasible

Units: W (with mW, uW, nW), um2, %, nm. A unit must belong to the metric it
qualifies; bare numbers are taken in the canonical unit.
"""

from __future__ import annotations

import re

from xbarcli.dse import (
    CATEGORICAL_METRICS,
    METRICS,
    ConstraintQuery,
    HardConstraint,
    SoftObjective,
)
from xbarcli.exceptions import DslSyntaxError, QueryError

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"

_UNITS: dict[str, dict[str, float]] = {
    "power": {"w": 1.0, "mw": 1e-3, "uw": 1e-6, "µw": 1e-6, "nw": 1e-9},
    "area": {"um2": 1.0, "µm2": 1.0, "um^2": 1.0, "µm²": 1.0},
    "accuracy": {"%": 1.0},
    "tech": {"nm": 1.0},
    "size": {},
}
_CANONICAL_UNIT = {"power": "W", "area": "um2", "accuracy": "%", "tech": "nm", "size": ""}

_HARD_RE = re.compile(
    r"^(?P<metric>[a-z_]+)\s*(?P<op><=|>=|==|=|≤|≥)\s*(?P<value>\S(?:.*\S)?)$", re.IGNORECASE
)
_IN_RE = re.compile(r"^(?P<metric>[a-z_]+)\s+(?:in|∈)\s*\{(?P<items>[^}]*)\}$", re.IGNORECASE)
_SOFT_RE = re.compile(
    r"^(?P<dir>minimize|maximize|min|max)\s+(?P<metric>[a-z_]+)"
    r"(?:\s+weight\s*=\s*(?P<weight>\S+))?$",
    re.IGNORECASE,
)
_TIE_RE = re.compile(r"^(?:tiebreak|tie_break|tie-break)\s+(?P<items>.+)$", re.IGNORECASE)
_VALUE_RE = re.compile(rf"^(?P<num>{_NUMBER})\s*(?P<unit>[^\s\d].*)?$")


def _statements(text: str) -> list[tuple[int, int, str]]:
    """(line, column, statement) triples, comments and blanks removed."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        offset = 0
        for part in line.split(";"):
            stripped = part.strip()
            if stripped:
                out.append((lineno, offset + part.index(stripped) + 1, stripped))
            offset += len(part) + 1
    return out


def _quantity(metric: str, text: str, line: int, column: int) -> float:
    m = _VALUE_RE.match(text.strip())
    if not m:
        raise DslSyntaxError(
            f"line {line}: expected a number for {metric}, got {text!r}",
            details={"line": line, "column": column},
        )
    value = float(m["num"])
    unit = (m["unit"] or "").strip().lower()
    if unit:
        factors = _UNITS.get(metric, {})
        if unit not in factors:
            raise DslSyntaxError(
                f"line {line}: unit {m['unit']!r} does not apply to {metric}",
                details={"line": line, "column": column, "unit": m["unit"]},
            )
        value *= factors[unit]
    return value


def _metric(name: str, line: int, column: int) -> str:
    metric = name.lower()
    if metric not in METRICS:
        raise DslSyntaxError(
            f"line {line}: unknown metric {name!r}",
            details={"line": line, "column": column, "metric": name},
        )
    return metric


def parse_query(text: str) -> ConstraintQuery:
    """
    Parse DSL text into a validated ConstraintQuery.

    Raises:
        DslSyntaxError: malformed statement, with line and column.
        QueryError: the statements parse but do not form a valid query.
    """
    hard: list[HardConstraint] = []
    soft: list[SoftObjective] = []
    tie: list[str] = []
    nearest = False

    for line, column, stmt in _statements(text):
        try:
            if stmt.lower() in ("nearest-infeasible", "nearest_infeasible"):
                nearest = True
            elif m := _SOFT_RE.match(stmt):
                weight = 1.0
                if m["weight"] is not None:
                    try:
                        weight = float(m["weight"])
                    except ValueError:
                        raise DslSyntaxError(
                            f"line {line}: weight must be a number, got {m['weight']!r}",
                            details={"line": line, "column": column},
                        ) from None
                soft.append(SoftObjective(_metric(m["metric"], line, column), m["dir"], weight))
            elif m := _TIE_RE.match(stmt):
                tie.extend(
                    _metric(t.strip(), line, column) for t in m["items"].split(",") if t.strip()
                )
            elif m := _IN_RE.match(stmt):
                metric = _metric(m["metric"], line, column)
                items = [t.strip() for t in m["items"].split(",") if t.strip()]
                values: list[float | str] = (
                    list(items)
                    if metric in CATEGORICAL_METRICS
                    else [_quantity(metric, t, line, column) for t in items]
                )
                hard.append(HardConstraint(metric, "in", tuple(values)))
            elif m := _HARD_RE.match(stmt):
                metric = _metric(m["metric"], line, column)
                value: float | str = (
                    m["value"].strip()
                    if metric in CATEGORICAL_METRICS
                    else _quantity(metric, m["value"], line, column)
                )
                hard.append(HardConstraint(metric, m["op"], value))
            else:
                raise DslSyntaxError(
                    f"line {line}: cannot parse {stmt!r}",
                    details={"line": line, "column": column, "statement": stmt},
                )
        except DslSyntaxError:
            raise
        except QueryError as e:
            raise DslSyntaxError(
                f"line {line}: {e.message}", details={"line": line, "column": column, **e.details}
            ) from None

    return ConstraintQuery(tuple(hard), tuple(soft), tuple(tie), nearest)


def _num(value: float) -> str:
    text = repr(float(value))
    return text[:-2] if text.endswith(".0") else text


def format_query(q: ConstraintQuery) -> str:
    """Print a query back as DSL; parse_query(format_query(q)) == q."""
    lines = []
    for h in q.hard:
        unit = _CANONICAL_UNIT.get(h.metric, "")
        if h.op == "in":
            assert isinstance(h.bound, tuple)
            items = ", ".join(
                str(b) if isinstance(b, str) else f"{_num(b)}{unit}" for b in h.bound
            )
            lines.append(f"{h.metric} in {{{items}}}")
        elif isinstance(h.bound, str):
            lines.append(f"{h.metric} {h.op} {h.bound}")
        else:
            lines.append(f"{h.metric} {h.op} {_num(h.bound)}{unit}")  # type: ignore[arg-type]
    for o in q.soft:
        lines.append(f"{o.direction} {o.metric} weight={_num(o.weight)}")
    if q.tie_break:
        lines.append("tiebreak " + ", ".join(q.tie_break))
    if q.nearest_infeasible:
        lines.append("nearest-infeasible")
    return "\n".join(lines) + "\n"
