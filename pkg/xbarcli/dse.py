"""Design repository and the weighted-constraint query engine.

A query is a list of hard constraints, weighted soft objectives and a
tie-break list. rank() runs filter → score → sort:

- filter_hard keeps entries that satisfy every hard predicate.
- score() min-max normalises each soft metric over the post-filter
  candidates (not the whole repository), orients it so larger is better and
  takes the weight-averaged sum. A metric that is constant over the
  candidates contributes 1.
- Sorting is by score descending, then the tie_break metrics in their
  preferred direction (power, area, tech, size ascending; accuracy
  descending; device and bitcell alphabetical), then design_key.

When nothing is feasible, rank raises NoFeasibleDesignError carrying the
per-constraint slack of the nearest violator, unless the query asks for
nearest-infeasible mode, in which case violators are ranked by total
normalised slack instead.

Repository files are CSV (the exchange schema in CSV_COLUMNS) or JSONL (the
same fields plus partition, n_patterns and meta). CSV cannot carry
partitioned designs.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import threading
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from xbarcli.design_space import _DATA_DIR, design_key
from xbarcli.exceptions import (
    DesignError,
    InputError,
    NoFeasibleDesignError,
    QueryError,
    RepositoryFormatError,
)
from xbarcli.models import SOURCES, DesignPoint, EvalResult, Mode, canonical_bitcell

logger = logging.getLogger(__name__)

NUMERIC_METRICS = ("power", "area", "accuracy", "tech", "size")
CATEGORICAL_METRICS = ("device", "bitcell")
METRICS = NUMERIC_METRICS + CATEGORICAL_METRICS
COMPARATORS = ("<=", ">=", "=", "in")
DIRECTIONS = ("minimize", "maximize")

# Direction a tie_break metric is sorted in.
PREFERRED_DIRECTION = {
    "power": "minimize",
    "area": "minimize",
    "accuracy": "maximize",
    "tech": "minimize",
    "size": "minimize",
}

CSV_COLUMNS = (
    "tech_nm",
    "device",
    "bitcell",
    "rows",
    "cols",
    "mode",
    "bits",
    "area_um2",
    "accuracy_pct",
    "avg_power_w",
    "n_images",
    "source",
)

PAPER_TABLE_PATH = _DATA_DIR / "table2.csv"
UNSPECIFIED_BITS = "?"


# ── Query model ───────────────────────────────────────────────────────────────


Bound = float | str | tuple[Any, ...]


def _check_metric(metric: str) -> str:
    name = metric.strip().lower()
    if name not in METRICS:
        raise QueryError(
            f"unknown metric {metric!r}; expected one of {list(METRICS)}",
            details={"metric": metric},
        )
    return name


def _normalise_category(metric: str, value: Any) -> str:
    text = str(value).strip()
    if metric == "bitcell":
        try:
            return canonical_bitcell(text)
        except DesignError as e:
            raise QueryError(e.message, details={"bitcell": text}) from None
    return text.upper()


def metric_value(r: EvalResult, metric: str) -> float | str:
    if metric == "device":
        return r.design.device
    if metric == "bitcell":
        return r.design.bitcell
    return r.metric(metric)


@dataclass(frozen=True)
class HardConstraint:
    metric: str
    op: str
    bound: Bound

    def __post_init__(self) -> None:
        metric = _check_metric(self.metric)
        object.__setattr__(self, "metric", metric)
        op = {"==": "=", "≤": "<=", "≥": ">=", "∈": "in"}.get(self.op, self.op)
        if op not in COMPARATORS:
            raise QueryError(f"unknown comparator {self.op!r}", details={"op": self.op})
        object.__setattr__(self, "op", op)

        if op == "in":
            values = self.bound if isinstance(self.bound, (list, tuple, set)) else (self.bound,)
            if not values:
                raise QueryError(f"{metric} in {{}}: empty set")
            bound: Bound = tuple(self._coerce(v) for v in values)
        else:
            if metric in CATEGORICAL_METRICS and op != "=":
                raise QueryError(f"{metric} supports only '=' and 'in'")
            bound = self._coerce(self.bound)
        object.__setattr__(self, "bound", bound)

    def _coerce(self, value: Any) -> float | str:
        if self.metric in CATEGORICAL_METRICS:
            return _normalise_category(self.metric, value)
        try:
            number = float(value)
        except (TypeError, ValueError):
            raise QueryError(
                f"{self.metric} bound must be numeric, got {value!r}",
                details={"metric": self.metric},
            ) from None
        if not math.isfinite(number):
            raise QueryError(f"{self.metric} bound must be finite")
        return number

    def holds(self, r: EvalResult) -> bool:
        return self.slack(r) == 0.0

    def slack(self, r: EvalResult) -> float:
        """Amount by which r violates this constraint; 0 when satisfied."""
        value = metric_value(r, self.metric)
        if self.op == "in":
            assert isinstance(self.bound, tuple)
            if isinstance(value, str):
                return 0.0 if value in self.bound else 1.0
            return min(abs(value - float(b)) for b in self.bound)
        if isinstance(value, str):
            return 0.0 if value == self.bound else 1.0
        bound = float(self.bound)  # type: ignore[arg-type]
        if self.op == "<=":
            return max(0.0, value - bound)
        if self.op == ">=":
            return max(0.0, bound - value)
        return abs(value - bound)

    def scale(self) -> float:
        """Normaliser for slack when comparing violators across constraints."""
        if self.metric in CATEGORICAL_METRICS:
            return 1.0
        values = self.bound if isinstance(self.bound, tuple) else (self.bound,)
        return max(max(abs(float(v)) for v in values), 1e-12)

    def to_dict(self) -> dict[str, Any]:
        bound = list(self.bound) if isinstance(self.bound, tuple) else self.bound
        return {"metric": self.metric, "op": self.op, "value": bound}


@dataclass(frozen=True)
class SoftObjective:
    metric: str
    direction: str = "minimize"
    weight: float = 1.0

    def __post_init__(self) -> None:
        metric = _check_metric(self.metric)
        if metric not in NUMERIC_METRICS:
            raise QueryError(f"cannot optimise categorical metric {metric!r}")
        object.__setattr__(self, "metric", metric)
        direction = {"min": "minimize", "max": "maximize"}.get(
            self.direction.lower(), self.direction.lower()
        )
        if direction not in DIRECTIONS:
            raise QueryError(f"direction must be minimize or maximize, got {self.direction!r}")
        object.__setattr__(self, "direction", direction)
        try:
            weight = float(self.weight)
        except (TypeError, ValueError):
            raise QueryError(f"weight must be numeric, got {self.weight!r}") from None
        if not math.isfinite(weight) or weight < 0:
            raise QueryError(f"weight must be finite and non-negative, got {self.weight!r}")
        object.__setattr__(self, "weight", weight)

    def to_dict(self) -> dict[str, Any]:
        return {"metric": self.metric, "direction": self.direction, "weight": self.weight}


@dataclass(frozen=True)
class ConstraintQuery:
    """Hard predicates, weighted soft objectives and a tie-break list."""

    hard: tuple[HardConstraint, ...] = ()
    soft: tuple[SoftObjective, ...] = ()
    tie_break: tuple[str, ...] = ()
    nearest_infeasible: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "hard", tuple(self.hard))
        object.__setattr__(self, "soft", tuple(self.soft))
        object.__setattr__(self, "tie_break", tuple(_check_metric(m) for m in self.tie_break))
        if not self.soft and not self.tie_break:
            raise QueryError("query needs at least one soft objective or a tie_break list")
        if self.soft and self.total_weight == 0 and not self.tie_break:
            raise QueryError("all soft weights are zero and tie_break is empty")

    @property
    def total_weight(self) -> float:
        return float(sum(o.weight for o in self.soft))

    def scaled(self, c: float) -> ConstraintQuery:
        """Same query with every soft weight multiplied by c."""
        return ConstraintQuery(
            self.hard,
            tuple(SoftObjective(o.metric, o.direction, o.weight * c) for o in self.soft),
            self.tie_break,
            self.nearest_infeasible,
        )

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "hard": [h.to_dict() for h in self.hard],
            "soft": [s.to_dict() for s in self.soft],
            "tie_break": list(self.tie_break),
        }
        if self.nearest_infeasible:
            out["nearest_infeasible"] = True
        return out

    @classmethod
    def from_dict(cls, raw: Any) -> ConstraintQuery:
        """
        Build and validate a query from its JSON shape.

        Raises:
            QueryError: any structural or semantic problem, with a message
                precise enough to be fed back to a model.
        """
        if not isinstance(raw, Mapping):
            raise QueryError("query must be a JSON object")
        unknown = set(raw) - {"hard", "soft", "tie_break", "nearest_infeasible"}
        if unknown:
            raise QueryError(f"unknown query fields: {sorted(unknown)}")
        hard_raw = raw.get("hard", []) or []
        soft_raw = raw.get("soft", []) or []
        tie_raw = raw.get("tie_break", []) or []
        if not isinstance(hard_raw, list) or not isinstance(soft_raw, list):
            raise QueryError("'hard' and 'soft' must be lists")
        if isinstance(tie_raw, str):
            tie_raw = [t for t in tie_raw.split(",") if t.strip()]
        if not isinstance(tie_raw, list) or not all(isinstance(t, str) for t in tie_raw):
            raise QueryError("'tie_break' must be a list of metric names")

        hard = []
        for k, item in enumerate(hard_raw):
            if not isinstance(item, Mapping) or not {"metric", "op", "value"} <= set(item):
                raise QueryError(f"hard[{k}] needs metric, op and value")
            hard.append(HardConstraint(str(item["metric"]), str(item["op"]), item["value"]))
        soft = []
        for k, item in enumerate(soft_raw):
            if not isinstance(item, Mapping) or "metric" not in item:
                raise QueryError(f"soft[{k}] needs a metric")
            soft.append(
                SoftObjective(
                    str(item["metric"]),
                    str(item.get("direction", "minimize")),
                    item.get("weight", 1.0),
                )
            )
        return cls(tuple(hard), tuple(soft), tuple(tie_raw), bool(raw.get("nearest_infeasible")))


QUERY_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "hard": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["metric", "op", "value"],
                "properties": {
                    "metric": {"enum": list(METRICS)},
                    "op": {"enum": list(COMPARATORS)},
                    "value": {
                        "oneOf": [
                            {"type": "number"},
                            {"type": "string"},
                            {"type": "array", "items": {"type": ["number", "string"]}},
                        ]
                    },
                },
            },
        },
        "soft": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["metric", "direction"],
                "properties": {
                    "metric": {"enum": list(NUMERIC_METRICS)},
                    "direction": {"enum": list(DIRECTIONS)},
                    "weight": {"type": "number", "minimum": 0},
                },
            },
        },
        "tie_break": {"type": "array", "items": {"enum": list(METRICS)}},
    },
}


# ── Repository ────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Repository:
    """Immutable snapshot: design_key → EvalResult, with a commit version."""

    entries: Mapping[str, EvalResult] = field(default_factory=dict)
    version: int = 0

    @classmethod
    def from_results(cls, results: Iterable[EvalResult], version: int = 1) -> Repository:
        """Raises RepositoryFormatError on a duplicate key."""
        entries: dict[str, EvalResult] = {}
        for k, r in enumerate(results, start=1):
            key = design_key(r.design)
            if key in entries:
                raise RepositoryFormatError(f"duplicate design key {key}", row=k)
            entries[key] = r
        return cls(dict(sorted(entries.items())), version)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[EvalResult]:
        return iter(self.entries.values())

    def __contains__(self, key: object) -> bool:
        return key in self.entries

    def keys(self) -> list[str]:
        return list(self.entries)

    def get(self, key: str) -> EvalResult | None:
        return self.entries.get(key)

    def provenance(self, key: str) -> str:
        return self.entries[key].source

    def lookup(self, **axes: Any) -> list[EvalResult]:
        """Entries whose design matches every given DesignPoint field."""
        out = []
        for r in self:
            dp = r.design
            if all(_axis_matches(dp, name, value) for name, value in axes.items()):
                out.append(r)
        return out

    def merged(self, results: Iterable[EvalResult]) -> Repository:
        """New snapshot with results added (same key replaces), version + 1."""
        entries = dict(self.entries)
        for r in results:
            entries[design_key(r.design)] = r
        return Repository(dict(sorted(entries.items())), self.version + 1)


def _axis_matches(dp: DesignPoint, name: str, value: Any) -> bool:
    if name == "device":
        return dp.device == str(value).upper()
    if name == "bitcell":
        return dp.bitcell == canonical_bitcell(str(value))
    return bool(getattr(dp, name) == value)


class RepositoryStore:
    """Many readers on immutable snapshots; one lock-guarded committer."""

    def __init__(self, initial: Repository | None = None) -> None:
        self._lock = threading.Lock()
        self._snapshot = initial or Repository()

    def snapshot(self) -> Repository:
        return self._snapshot

    @property
    def version(self) -> int:
        return self._snapshot.version

    def commit(self, results: Iterable[EvalResult]) -> Repository:
        batch = list(results)
        with self._lock:
            self._snapshot = self._snapshot.merged(batch)
            logger.debug("committed %d results → version %d", len(batch), self._snapshot.version)
            return self._snapshot


# ── Filter / score / rank ─────────────────────────────────────────────────────


NormStats = dict[str, tuple[float, float]]


def filter_hard(repo: Repository | Iterable[EvalResult], q: ConstraintQuery) -> list[EvalResult]:
    """Entries satisfying every hard predicate, in design_key order."""
    results = list(repo)
    if not results:
        raise QueryError("repository is empty")
    return sorted(
        (r for r in results if all(h.holds(r) for h in q.hard)),
        key=lambda r: design_key(r.design),
    )


def norm_stats(candidates: Sequence[EvalResult], metrics: Iterable[str]) -> NormStats:
    """(min, max) per numeric metric over the candidate set."""
    stats: NormStats = {}
    for m in metrics:
        values = [float(r.metric(m)) for r in candidates]
        if values:
            stats[m] = (min(values), max(values))
    return stats


def score(entry: EvalResult, q: ConstraintQuery, stats: NormStats) -> float:
    """Weight-averaged, min-max-normalised soft objective utility in [0, 1]."""
    total = q.total_weight
    if not q.soft or total == 0:
        return 1.0
    acc = 0.0
    for o in q.soft:
        lo, hi = stats[o.metric]
        if hi == lo:
            u = 1.0
        else:
            u = (entry.metric(o.metric) - lo) / (hi - lo)
            if o.direction == "minimize":
                u = 1.0 - u
        acc += o.weight * u
    return min(max(acc / total, 0.0), 1.0)


@dataclass(frozen=True)
class RankedEntry:
    key: str
    score: float
    feasible: bool
    result: EvalResult
    violation: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        out = {"design_key": self.key, "score": self.score, "feasible": self.feasible}
        out.update(result_to_row(self.result))
        if not self.feasible:
            out["violation"] = self.violation
        return out


@dataclass(frozen=True)
class RankedSelection:
    entries: tuple[RankedEntry, ...]
    query: ConstraintQuery

    @property
    def top(self) -> RankedEntry:
        return self.entries[0]

    def keys(self) -> list[str]:
        return [e.key for e in self.entries]

    def to_dict(self, limit: int | None = None) -> dict[str, Any]:
        shown = self.entries if limit is None else self.entries[:limit]
        return {
            "query": self.query.to_dict(),
            "count": len(self.entries),
            "results": [e.to_dict() for e in shown],
        }


def _tie_value(r: EvalResult, metric: str) -> Any:
    value = metric_value(r, metric)
    if isinstance(value, str):
        return value
    return -value if PREFERRED_DIRECTION.get(metric) == "maximize" else value


def _sort_key(entry: RankedEntry, q: ConstraintQuery) -> tuple[Any, ...]:
    return (
        entry.violation,
        -entry.score,
        tuple(_tie_value(entry.result, m) for m in q.tie_break),
        entry.key,
    )


def violation(r: EvalResult, q: ConstraintQuery) -> float:
    """Sum over hard constraints of slack / |bound|."""
    return float(sum(h.slack(r) / h.scale() for h in q.hard))


def nearest_miss(repo: Iterable[EvalResult], q: ConstraintQuery) -> dict[str, Any]:
    """Per-constraint slack of the entry with the least total normalised violation."""
    best = min(repo, key=lambda r: (violation(r, q), design_key(r.design)))
    return {
        "design_key": design_key(best.design),
        "total_violation": violation(best, q),
        "constraints": [
            {
                **h.to_dict(),
                "actual": metric_value(best, h.metric),
                "slack": h.slack(best),
                "satisfied": h.holds(best),
            }
            for h in q.hard
        ],
    }


def rank(repo: Repository | Iterable[EvalResult], q: ConstraintQuery) -> RankedSelection:
    """
    filter_hard → score → stable sort.

    Raises:
        QueryError: empty repository.
        NoFeasibleDesignError: nothing satisfies the hard constraints; details
            carry nearest-miss diagnostics.
    """
    results = list(repo)
    candidates = filter_hard(results, q)
    feasible = True
    if not candidates:
        miss = nearest_miss(results, q)
        if not q.nearest_infeasible:
            raise NoFeasibleDesignError(
                f"no design satisfies the hard constraints; nearest is {miss['design_key']}",
                details={"nearest_miss": miss},
            )
        candidates = results
        feasible = False

    stats = norm_stats(candidates, {o.metric for o in q.soft})
    entries = [
        RankedEntry(
            design_key(r.design),
            score(r, q, stats),
            feasible,
            r,
            0.0 if feasible else violation(r, q),
        )
        for r in candidates
    ]
    entries.sort(key=lambda e: _sort_key(e, q))
    logger.debug("ranked %d of %d entries", len(entries), len(results))
    return RankedSelection(tuple(entries), q)


# ── Pareto ────────────────────────────────────────────────────────────────────


def parse_objectives(text: str) -> list[tuple[str, str]]:
    """'min:power,max:accuracy' → [('power', 'minimize'), ('accuracy', 'maximize')]."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        direction, sep, metric = part.partition(":")
        if not sep:
            raise QueryError(f"objective {part!r} must look like min:<metric> or max:<metric>")
        o = SoftObjective(metric, direction)
        out.append((o.metric, o.direction))
    if not out:
        raise QueryError("at least one objective is required")
    return out


def pareto_front(
    repo: Repository | Iterable[EvalResult], objectives: Sequence[tuple[str, str]]
) -> set[str]:
    """Keys of the non-dominated entries; equal entries never dominate each other."""
    if not objectives:
        raise QueryError("at least one objective is required")
    results = list(repo)
    if not results:
        return set()
    cols = []
    for metric, direction in objectives:
        o = SoftObjective(metric, direction)
        values = np.array([r.metric(o.metric) for r in results], dtype=float)
        cols.append(values if o.direction == "minimize" else -values)
    costs = np.column_stack(cols)

    front = set()
    for i, row in enumerate(costs):
        no_worse = np.all(costs <= row, axis=1)
        better = np.any(costs < row, axis=1)
        if not np.any(no_worse & better):
            front.add(design_key(results[i].design))
    return front


# ── Persistence ───────────────────────────────────────────────────────────────


def result_to_row(r: EvalResult) -> dict[str, Any]:
    """CSV-schema dict for one result."""
    dp = r.design
    if dp.mode.is_analog:
        bits = ""
    else:
        bits = UNSPECIFIED_BITS if dp.mode.bits is None else str(dp.mode.bits)
    return {
        "tech_nm": dp.tech,
        "device": dp.device,
        "bitcell": dp.bitcell,
        "rows": dp.rows,
        "cols": dp.cols,
        "mode": dp.mode.kind,
        "bits": bits,
        "area_um2": r.area_um2,
        "accuracy_pct": r.accuracy_pct,
        "avg_power_w": r.avg_power_w,
        "n_images": r.n_images,
        "source": r.source,
    }


def _result_from_row(row: Mapping[str, Any], lineno: int) -> EvalResult:
    try:
        mode_kind = str(row["mode"]).strip().lower()
        bits_raw = str(row["bits"] if row["bits"] is not None else "").strip()
        if mode_kind == "analog":
            mode = Mode.analog()
        elif mode_kind == "digital":
            mode = Mode.digital(None if bits_raw in ("", UNSPECIFIED_BITS) else int(bits_raw))
        else:
            raise RepositoryFormatError(
                f"mode must be analog or digital, got {mode_kind!r}", lineno
            )
        partition = tuple(row.get("partition") or (1, 1))
        dp = DesignPoint(
            int(row["tech_nm"]),
            str(row["device"]),
            str(row["bitcell"]),
            int(row["rows"]),
            int(row["cols"]),
            mode,
            (int(partition[0]), int(partition[1])),
        )
        source = str(row["source"]).strip()
        if source not in SOURCES:
            raise RepositoryFormatError(f"unknown source {source!r}", lineno)
        n_images = int(row["n_images"])
        return EvalResult(
            design=dp,
            area_um2=float(row["area_um2"]),
            accuracy_pct=float(row["accuracy_pct"]),
            avg_power_w=float(row["avg_power_w"]),
            n_images=n_images,
            n_patterns=int(row.get("n_patterns", 0) or 0),
            source=source,
            meta={str(k): str(v) for k, v in (row.get("meta") or {}).items()},
        )
    except RepositoryFormatError:
        raise
    except KeyError as e:
        raise RepositoryFormatError(f"missing field {e.args[0]!r}", lineno) from None
    except (ValueError, TypeError, DesignError) as e:
        msg = e.message if isinstance(e, DesignError) else str(e)
        raise RepositoryFormatError(f"unparsable value: {msg}", lineno) from None


def _collect(rows: Iterable[tuple[int, Mapping[str, Any]]]) -> Repository:
    entries: dict[str, EvalResult] = {}
    for lineno, row in rows:
        r = _result_from_row(row, lineno)
        key = design_key(r.design)
        if key in entries:
            raise RepositoryFormatError(f"duplicate design key {key}", lineno)
        entries[key] = r
    return Repository(dict(sorted(entries.items())), 1)


def loads_csv(text: str) -> Repository:
    """Parse CSV text. Data rows are numbered from 1; the header is row 0."""
    reader = csv.DictReader(io.StringIO(text))
    header = reader.fieldnames
    if not header:
        raise RepositoryFormatError("missing header row", 0)
    missing = [c for c in CSV_COLUMNS if c not in [h.strip() for h in header]]
    if missing:
        raise RepositoryFormatError(f"missing column(s): {', '.join(missing)}", 0)

    def rows() -> Iterator[tuple[int, Mapping[str, Any]]]:
        for k, row in enumerate(reader, start=1):
            if None in row or any(row.get(c) is None for c in CSV_COLUMNS):
                raise RepositoryFormatError("wrong number of fields", k)
            yield k, {key.strip(): value for key, value in row.items()}

    return _collect(rows())


def loads_jsonl(text: str) -> Repository:
    """Parse JSONL text; rows are numbered by line."""

    def rows() -> Iterator[tuple[int, Mapping[str, Any]]]:
        for k, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise RepositoryFormatError(f"invalid JSON: {e.msg}", k) from None
            if not isinstance(obj, dict):
                raise RepositoryFormatError("each line must be a JSON object", k)
            yield k, obj

    return _collect(rows())


def load_repository(path: str | Path) -> Repository:
    """
    Load a repository file; the suffix picks the format (.jsonl, else CSV).

    Raises:
        InputError: file missing.
        RepositoryFormatError: missing column, unparsable value or duplicate
            key, with the offending row.
    """
    p = Path(path)
    if not p.exists():
        raise InputError(f"repository file not found: {p}", details={"path": str(p)})
    text = p.read_text(encoding="utf-8")
    repo = loads_jsonl(text) if p.suffix.lower() == ".jsonl" else loads_csv(text)
    logger.info("loaded %d entries from %s", len(repo), p)
    return repo


def _number(value: float | int) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def dumps_csv(repo: Repository | Iterable[EvalResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in sorted(repo, key=lambda r: design_key(r.design)):
        if r.design.partition != (1, 1):
            raise RepositoryFormatError(
                f"{design_key(r.design)}: partitioned designs need the JSONL format"
            )
        row = result_to_row(r)
        values = [row[c] for c in CSV_COLUMNS]
        writer.writerow([_number(v) if isinstance(v, float) else v for v in values])
    return buf.getvalue()


def dumps_jsonl(repo: Repository | Iterable[EvalResult]) -> str:
    lines = []
    for r in sorted(repo, key=lambda r: design_key(r.design)):
        row = result_to_row(r)
        row["partition"] = list(r.design.partition)
        row["n_patterns"] = r.n_patterns
        row["meta"] = dict(sorted(r.meta.items()))
        lines.append(json.dumps(row, sort_keys=False))
    return "".join(line + "\n" for line in lines)


def save_repository(repo: Repository | Iterable[EvalResult], path: str | Path) -> Path:
    """Write sorted by design_key; .jsonl suffix selects JSONL, anything else CSV."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    text = dumps_jsonl(repo) if p.suffix.lower() == ".jsonl" else dumps_csv(repo)
    p.write_text(text, encoding="utf-8")
    return p


def seed_paper_table() -> Repository:
    """The embedded 60-row reference dataset, bit resolution unspecified."""
    return loads_csv(PAPER_TABLE_PATH.read_text(encoding="utf-8"))
