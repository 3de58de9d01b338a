"""Tests for xbarcli/passk.py — Pass@k harness against offline backends."""

from __future__ import annotations

import json
from pathlib import Path

import httpx
import pytest
import respx

from xbarcli.dse import Repository
from xbarcli.exceptions import InputError, QueryError
from xbarcli.llm import EndpointConfig
from xbarcli.passk import (
    DslBackend,
    EndpointBackend,
    ScriptedBackend,
    Task,
    load_tasks,
    oracle_top1,
    passk_harness,
)
from xbarcli.query_dsl import parse_query


def reply_for(task: Task) -> str:
    return json.dumps(parse_query(task.dsl).to_dict())


@pytest.fixture(scope="module")
def tasks() -> list[Task]:
    return load_tasks()


def test_bundled_tasks(tasks: list[Task]) -> None:
    assert len(tasks) == 30
    assert {t.category for t in tasks} == {"power", "area", "hard"}
    assert sum(t.category == "power" for t in tasks) == 10


def test_oracle_top1_first_power_task(tasks: list[Task], paper_repo: Repository) -> None:
    assert oracle_top1(paper_repo, tasks[0]) == "t7_pcm_1t1r_64x64_dx_p1x1"


async def test_dsl_backend_passes_everything(tasks: list[Task], paper_repo: Repository) -> None:
    report = await passk_harness(tasks, DslBackend(), paper_repo, k=3)
    assert report.pass_at_1 == 1.0
    assert report.all_passed
    assert report.to_dict()["tasks"] == 30
    assert set(report.by_category()) == {"power", "area", "hard"}


async def test_scripted_failures_recover_by_third_attempt(
    tasks: list[Task], paper_repo: Repository
) -> None:
    power = [t for t in tasks if t.category == "power"]
    script = {t.id: [reply_for(t)] for t in power}
    for t in power[:2]:
        script[t.id] = ["I think you want a PCM design.", reply_for(t)]
    report = await passk_harness(power, ScriptedBackend(script), paper_repo, k=3)
    assert report.pass_at_1 == pytest.approx(0.8)
    assert report.pass_at_k == 1.0
    firsts = {o.task_id: o.first_success_attempt for o in report.outcomes}
    assert firsts[power[0].id] == firsts[power[1].id] == 2
    cats = report.by_category()["power"]
    assert cats["pass_at_1"] <= cats["pass_at_3"]


async def test_wrong_answer_is_a_failure_not_a_crash(
    tasks: list[Task], paper_repo: Repository
) -> None:
    task = tasks[0]
    wrong = json.dumps({"soft": [{"metric": "power", "direction": "maximize"}]})
    report = await passk_harness([task], ScriptedBackend({task.id: [wrong]}), paper_repo, k=1)
    outcome = report.outcomes[0]
    assert outcome.first_success_attempt is None
    assert outcome.got is not None and outcome.got != outcome.expected
    assert report.pass_at_1 == 0.0


async def test_exhausted_script_records_error(tasks: list[Task], paper_repo: Repository) -> None:
    report = await passk_harness(tasks[:1], ScriptedBackend({}), paper_repo, k=2)
    assert report.outcomes[0].error == "no valid query after 2 attempts"
    assert not report.all_passed


async def test_k_must_be_positive(tasks: list[Task], paper_repo: Repository) -> None:
    with pytest.raises(QueryError):
        await passk_harness(tasks, DslBackend(), paper_repo, k=0)


@respx.mock
async def test_endpoint_backend_http_failure_per_task(
    tasks: list[Task], paper_repo: Repository
) -> None:
    base = "http://llm.test/v1"
    respx.post(f"{base}/chat/completions").mock(return_value=httpx.Response(500))
    backend = EndpointBackend(EndpointConfig(base, "m"))
    try:
        report = await passk_harness(tasks[:3], backend, paper_repo, k=3)
    finally:
        await backend.close()
    assert [o.error for o in report.outcomes] == ["endpoint returned HTTP 500"] * 3
    assert report.pass_at_k == 0.0


def test_script_file_accepts_objects(tmp_path: Path, tasks: list[Task]) -> None:
    p = tmp_path / "script.json"
    p.write_text(json.dumps({tasks[0].id: [parse_query(tasks[0].dsl).to_dict()]}))
    assert isinstance(ScriptedBackend.from_file(p), ScriptedBackend)
    p.write_text("[]")
    with pytest.raises(InputError):
        ScriptedBackend.from_file(p)


def test_load_tasks_errors(tmp_path: Path) -> None:
    with pytest.raises(InputError):
        load_tasks(tmp_path / "nope.json")
    p = tmp_path / "tasks.json"
    p.write_text(json.dumps([{"id": "a", "category": "latency", "text": "t", "dsl": "d"}]))
    with pytest.raises(InputError, match="category"):
        load_tasks(p)
    p.write_text(json.dumps([{"id": "a", "category": "power", "text": "t"}]))
    with pytest.raises(InputError, match="missing field"):
        load_tasks(p)


async def test_infeasible_reference_is_recorded_against_its_task(
    tasks: list[Task], paper_repo: Repository
) -> None:
    impossible = Task("power-x", "power", "Anything under a nanowatt.", "power <= 1nW; min power")
    report = await passk_harness([impossible, tasks[0]], DslBackend(), paper_repo, k=1)
    bad, good = report.outcomes
    assert bad.task_id == "power-x"
    assert bad.first_success_attempt is None
    assert bad.error is not None and bad.got is None
    assert good.first_success_attempt == 1
    assert report.pass_at_1 == pytest.approx(0.5)
