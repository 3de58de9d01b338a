"""Tests for xbarcli/report.py."""

from __future__ import annotations

import csv
import io

import pytest

from xbarcli.dse import Repository, pareto_front
from xbarcli.exceptions import InputError
from xbarcli.report import AXES, REPORT_METRICS, axis_value, summarize, summary_csv


def test_summary_overall_matches_repository(paper_repo: Repository) -> None:
    s = summarize(paper_repo)
    assert s["entries"] == 60
    power = [r.avg_power_w for r in paper_repo]
    assert s["overall"]["power"]["min"] == min(power)
    assert s["overall"]["power"]["max"] == max(power)
    assert s["objectives"] == ["min:power", "max:accuracy"]


def test_groups_partition_the_repository(paper_repo: Repository) -> None:
    s = summarize(paper_repo)
    for axis in AXES:
        assert sum(row["count"] for row in s["groups"][axis]) == 60
    assert [row["tech"] for row in s["groups"]["tech"]] == ["7nm", "9nm", "14nm", "20nm"]
    assert [row["size"] for row in s["groups"]["size"]] == ["16x16", "32x32", "64x64"]


def test_group_stats_are_ordered(paper_repo: Repository) -> None:
    for row in summarize(paper_repo)["groups"]["device"]:
        for m in REPORT_METRICS:
            assert row[f"{m}_min"] <= row[f"{m}_median"] <= row[f"{m}_max"]


def test_front_matches_pareto(paper_repo: Repository) -> None:
    s = summarize(paper_repo, objectives=[("area", "minimize")])
    assert {row["design_key"] for row in s["front"]} == pareto_front(
        paper_repo, [("area", "minimize")]
    )


def test_axis_value(paper_repo: Repository) -> None:
    r = paper_repo.get("t7_pcm_1t1r_64x64_dx_p1x1")
    assert r is not None
    assert [axis_value(r, a) for a in AXES] == ["7nm", "PCM", "1T1R", "64x64", "dx"]


def test_summary_csv_shape(paper_repo: Repository) -> None:
    s = summarize(paper_repo, axes=("device",))
    rows = list(csv.reader(io.StringIO(summary_csv(s))))
    assert rows[0] == ["axis", "value", "metric", "count", "min", "median", "max"]
    assert len(rows) == 1 + 3 + 3 * len(s["groups"]["device"])
    assert rows[1][:4] == ["all", "all", "power", "60"]


def test_empty_repository() -> None:
    with pytest.raises(InputError):
        summarize(Repository())
