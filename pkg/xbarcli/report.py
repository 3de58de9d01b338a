"""Repository summaries: per-axis min/median/max, Pareto front, CSV."""

from __future__ import annotations

import csv
import io
import logging
from collections.abc import Sequence
from typing import Any

import numpy as np

from xbarcli.dse import Repository, pareto_front, result_to_row
from xbarcli.exceptions import InputError
from xbarcli.models import EvalResult

logger = logging.getLogger(__name__)

AXES = ("tech", "device", "bitcell", "size", "mode")
REPORT_METRICS = ("power", "area", "accuracy")
DEFAULT_OBJECTIVES = (("power", "minimize"), ("accuracy", "maximize"))


def axis_value(r: EvalResult, axis: str) -> str:
    dp = r.design
    if axis == "tech":
        return f"{dp.tech}nm"
    if axis == "size":
        return f"{dp.rows}x{dp.cols}"
    if axis == "mode":
        return dp.mode.token
    return str(getattr(dp, axis))


def _stats(values: Sequence[float]) -> dict[str, float]:
    arr = np.asarray(values, dtype=float)
    return {"min": float(arr.min()), "median": float(np.median(arr)), "max": float(arr.max())}


def _group_sort_key(value: str) -> tuple[float, str]:
    head = value.split("x")[0].removesuffix("nm")
    return (float(head), value) if head.isdigit() else (float("inf"), value)


def summarize(
    repo: Repository,
    axes: Sequence[str] = AXES,
    objectives: Sequence[tuple[str, str]] = DEFAULT_OBJECTIVES,
) -> dict[str, Any]:
    """
    Global and per-axis statistics plus the Pareto front.

    Raises:
        InputError: empty repository.
    """
    if len(repo) == 0:
        raise InputError("empty repository: nothing to report")
    results = list(repo)
    overall = {m: _stats([r.metric(m) for r in results]) for m in REPORT_METRICS}

    groups: dict[str, list[dict[str, Any]]] = {}
    for axis in axes:
        buckets: dict[str, list[EvalResult]] = {}
        for r in results:
            buckets.setdefault(axis_value(r, axis), []).append(r)
        rows = []
        for value in sorted(buckets, key=_group_sort_key):
            members = buckets[value]
            row: dict[str, Any] = {axis: value, "count": len(members)}
            for m in REPORT_METRICS:
                for stat, x in _stats([r.metric(m) for r in members]).items():
                    row[f"{m}_{stat}"] = x
            rows.append(row)
        groups[axis] = rows

    front_keys = pareto_front(repo, objectives)
    front = [
        {"design_key": key, **result_to_row(r)}
        for key, r in repo.entries.items()
        if key in front_keys
    ]
    logger.info("summarised %d entries, %d on the front", len(results), len(front))
    return {
        "entries": len(results),
        "overall": overall,
        "groups": groups,
        "objectives": [f"{d[:3]}:{m}" for m, d in objectives],
        "front": front,
    }


def summary_csv(summary: dict[str, Any]) -> str:
    """Long-format CSV: axis, value, metric, count, min, median, max."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["axis", "value", "metric", "count", "min", "median", "max"])
    for m, s in summary["overall"].items():
        writer.writerow(
            ["all", "all", m, summary["entries"], repr(s["min"]), repr(s["median"]), repr(s["max"])]
        )
    for axis, rows in summary["groups"].items():
        for row in rows:
            for m in REPORT_METRICS:
                writer.writerow(
                    [
                        axis,
                        row[axis],
                        m,
                        row["count"],
                        repr(row[f"{m}_min"]),
                        repr(row[f"{m}_median"]),
                        repr(row[f"{m}_max"]),
                    ]
                )
    return buf.getvalue()

