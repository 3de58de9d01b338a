"""
Pass@k harness for query extraction.

A task passes at attempt i when the query its backend produced on attempt i
ranks the same top-1 design as the task's reference DSL query over the
repository. Backends:

  DslBackend       parses the reference DSL directly (always attempt 1)
  ScriptedBackend  replays a fixed reply script per task id, offline
  EndpointBackend  asks a live OpenAI-compatible endpoint

Script format (JSON): {"<task id>": ["<reply 1>", "<reply 2>", ...], ...}.
Each reply is the raw assistant content; a missing or exhausted script
counts as an empty reply.
"""

from __future__ import annotations

import asyncio
import json
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

from xbarcli.dse import Repository, rank
from xbarcli.exceptions import InputError, LLMError, QueryError, XbarError
from xbarcli.llm import (
    AuditLog,
    ChatClient,
    EndpointConfig,
    Extraction,
    Message,
    extract_with,
)
from xbarcli.query_dsl import parse_query

logger = logging.getLogger(__name__)

CATEGORIES = ("power", "area", "hard")
DEFAULT_TASKS_PATH = Path(__file__).parent / "data" / "tasks.json"


@dataclass(frozen=True)
class Task:
    id: str
    category: str
    text: str
    dsl: str
    expected: str | None = None  # oracle top-1 key; computed from dsl when absent

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise InputError(
                f"task {self.id}: category must be one of {', '.join(CATEGORIES)}",
                details={"task": self.id, "category": self.category},
            )


def load_tasks(path: str | Path | None = None) -> list[Task]:
    """Tasks from a JSON file: a list, or an object with a "tasks" list."""
    p = Path(path) if path else DEFAULT_TASKS_PATH
    if not p.exists():
        raise InputError(f"tasks file not found: {p}", details={"path": str(p)})
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise InputError(f"tasks file {p} is not valid JSON: {e}") from e
    items = raw.get("tasks", []) if isinstance(raw, dict) else raw
    tasks = []
    for k, item in enumerate(items):
        try:
            tasks.append(
                Task(
                    id=str(item["id"]),
                    category=str(item["category"]).lower(),
                    text=str(item["text"]),
                    dsl=str(item["dsl"]),
                    expected=item.get("expected"),
                )
            )
        except (KeyError, TypeError) as e:
            raise InputError(f"task {k} in {p} is missing field {e}") from e
    ids = [t.id for t in tasks]
    if len(set(ids)) != len(ids):
        raise InputError(f"duplicate task ids in {p}")
    return tasks


def oracle_top1(repo: Repository, task: Task) -> str:
    """Top-1 design key of the task's reference query."""
    if task.expected:
        return task.expected
    return rank(repo, parse_query(task.dsl)).top.key


# ── Backends ──────────────────────────────────────────────────────────────────


class Backend(Protocol):
    name: str

    async def extract(self, task: Task, k: int) -> Extraction: ...


class DslBackend:
    """Bypasses the model: the reference DSL is the answer."""

    name = "dsl"

    async def extract(self, task: Task, k: int) -> Extraction:
        return Extraction(parse_query(task.dsl), 1, [task.dsl])


class ScriptedBackend:
    """Replays scripted replies through the same validation loop as a live model."""

    name = "scripted"

    def __init__(
        self,
        script: Mapping[str, Sequence[str]],
        stats: Mapping[str, Any] | None = None,
        audit: AuditLog | None = None,
    ) -> None:
        self._script = {task_id: list(replies) for task_id, replies in script.items()}
        self._stats = stats
        self._audit = audit

    @classmethod
    def from_file(cls, path: str | Path, **kwargs: Any) -> ScriptedBackend:
        p = Path(path)
        if not p.exists():
            raise InputError(f"script file not found: {p}", details={"path": str(p)})
        try:
            raw = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise InputError(f"script file {p} is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise InputError(f"script file {p} must map task ids to reply lists")
        script = {
            str(task_id): [r if isinstance(r, str) else json.dumps(r) for r in replies]
            for task_id, replies in raw.items()
        }
        return cls(script, **kwargs)

    async def extract(self, task: Task, k: int) -> Extraction:
        replies = iter(self._script.get(task.id, []))

        async def send(messages: list[Message]) -> str:
            return next(replies, "")

        return await extract_with(send, task.text, k, self._stats, self._audit, task.id, self.name)


class EndpointBackend:
    """Live endpoint; one shared ChatClient for the whole run."""

    name = "endpoint"

    def __init__(
        self,
        cfg: EndpointConfig,
        client: ChatClient | None = None,
        stats: Mapping[str, Any] | None = None,
        audit: AuditLog | None = None,
    ) -> None:
        self._cfg = cfg
        self._client = client or ChatClient(cfg)
        self._stats = stats
        self._audit = audit

    async def extract(self, task: Task, k: int) -> Extraction:
        return await extract_with(
            self._client.complete,
            task.text,
            k,
            self._stats,
            self._audit,
            task.id,
            self._cfg.model_name,
        )

    async def close(self) -> None:
        await self._client.close()


# ── Report ────────────────────────────────────────────────────────────────────


@dataclass
class TaskOutcome:
    task_id: str
    category: str
    first_success_attempt: int | None
    expected: str
    got: str | None = None
    error: str | None = None

    def passed_within(self, k: int) -> bool:
        return self.first_success_attempt is not None and self.first_success_attempt <= k

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "category": self.category,
            "first_success_attempt": self.first_success_attempt,
            "expected": self.expected,
            "got": self.got,
            "error": self.error,
        }


@dataclass
class PassKReport:
    k: int
    backend: str
    outcomes: list[TaskOutcome] = field(default_factory=list)

    def _rate(self, within: int, category: str | None = None) -> float:
        pool = [o for o in self.outcomes if category is None or o.category == category]
        if not pool:
            return 0.0
        return sum(o.passed_within(within) for o in pool) / len(pool)

    @property
    def pass_at_1(self) -> float:
        return self._rate(1)

    @property
    def pass_at_k(self) -> float:
        return self._rate(self.k)

    def by_category(self) -> dict[str, dict[str, Any]]:
        out = {}
        for category in CATEGORIES:
            pool = [o for o in self.outcomes if o.category == category]
            if pool:
                out[category] = {
                    "tasks": len(pool),
                    "pass_at_1": self._rate(1, category),
                    f"pass_at_{self.k}": self._rate(self.k, category),
                }
        return out

    @property
    def all_passed(self) -> bool:
        return bool(self.outcomes) and self.pass_at_k == 1.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "backend": self.backend,
            "k": self.k,
            "tasks": len(self.outcomes),
            "pass_at_1": self.pass_at_1,
            f"pass_at_{self.k}": self.pass_at_k,
            "categories": self.by_category(),
            "outcomes": [o.to_dict() for o in self.outcomes],
        }


async def _run_task(
    task: Task, backend: Backend, repo: Repository, k: int, gate: asyncio.Semaphore
) -> TaskOutcome:
    try:
        expected = oracle_top1(repo, task)
    except XbarError as e:
        logger.warning("task %s has no reference answer: %s", task.id, e.message)
        return TaskOutcome(task.id, task.category, None, "", error=e.message)
    async with gate:
        try:
            extraction = await backend.extract(task, k)
        except (LLMError, QueryError) as e:
            logger.warning("task %s failed: %s", task.id, e.message)
            return TaskOutcome(task.id, task.category, None, expected, error=e.message)
    try:
        got = rank(repo, extraction.query).top.key
    except XbarError as e:
        return TaskOutcome(task.id, task.category, None, expected, error=e.message)
    attempt = extraction.attempts if got == expected else None
    return TaskOutcome(task.id, task.category, attempt, expected, got)


async def passk_harness(
    tasks: Sequence[Task],
    backend: Backend,
    repo: Repository,
    k: int = 3,
    max_in_flight: int = 4,
) -> PassKReport:
    """
    Run every task through backend with up to k attempts, at most
    max_in_flight concurrently. Backend failures are recorded per task.
    """
    if k < 1:
        raise QueryError(f"k must be >= 1, got {k}")
    gate = asyncio.Semaphore(max(1, max_in_flight))
    outcomes = await asyncio.gather(*(_run_task(t, backend, repo, k, gate) for t in tasks))
    report = PassKReport(k, backend.name, list(outcomes))
    logger.info(
        "pass@1 %.3f, pass@%d %.3f over %d tasks", report.pass_at_1, k, report.pass_at_k, len(tasks)
    )
    return report

