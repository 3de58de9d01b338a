"""
Natural-language front end: turns a free-text design request into a
ConstraintQuery through any OpenAI-compatible chat endpoint.

Wire protocol: POST {base_url}/chat/completions with
{model, messages, temperature: 0}; the assistant content must be a JSON
object matching dse.QUERY_SCHEMA. Invalid content is fed back to the model
with the validation error appended, up to max_retries attempts.

The API key comes from XBAR_LLM_API_KEY only. It is sent as a bearer token
and never logged or written to the audit log.
"""

from __future__ import annotations

import asyncio
import json
import logging
import os
import re
import time
from collections.abc import Awaitable, Callable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any
from urllib.parse import urlparse

import httpx
import toml

from xbarcli.config import LLMConfig
from xbarcli.dse import (
    CATEGORICAL_METRICS,
    NUMERIC_METRICS,
    QUERY_SCHEMA,
    ConstraintQuery,
    Repository,
)
from xbarcli.exceptions import (
    ConfigInvalidError,
    InputError,
    LLMHTTPError,
    LLMNetworkError,
    QueryError,
    RetriesExhaustedError,
)

logger = logging.getLogger(__name__)

API_KEY_ENV = "XBAR_LLM_API_KEY"

_UNIT_NOTES = (
    "Units: power in watts (W), area in square micrometres (um2), accuracy in percent "
    "(0-100), tech in nanometres (nm), size is the crossbar edge in cells. Convert any other "
    "unit the user gives (for example mW) into these before writing numbers."
)
_METRIC_UNITS = {"power": "W", "area": "um2", "accuracy": "%", "tech": "nm", "size": "cells"}

Message = dict[str, str]
Send = Callable[[list[Message]], Awaitable[str]]


# ── Endpoint configuration ────────────────────────────────────────────────────


@dataclass(frozen=True)
class EndpointConfig:
    """Where and how to reach the chat endpoint. The key is never persisted."""

    base_url: str
    model_name: str
    api_key: str = field(default="", repr=False)
    timeout: float = 30.0
    max_retries: int = 3

    def __post_init__(self) -> None:
        parsed = urlparse(self.base_url)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise ConfigInvalidError(f"llm base_url is not a valid http(s) URL: {self.base_url!r}")
        if not self.model_name:
            raise ConfigInvalidError("llm model_name must not be empty")
        if self.max_retries < 1:
            raise ConfigInvalidError(f"llm max_retries must be >= 1, got {self.max_retries}")
        if self.timeout <= 0:
            raise ConfigInvalidError(f"llm timeout must be positive, got {self.timeout}")

    @property
    def completions_url(self) -> str:
        return self.base_url.rstrip("/") + "/chat/completions"

    def with_retries(self, max_retries: int) -> EndpointConfig:
        return EndpointConfig(
            self.base_url, self.model_name, self.api_key, self.timeout, max_retries
        )

    @classmethod
    def from_llm_config(cls, cfg: LLMConfig) -> EndpointConfig:
        return cls(
            base_url=cfg.base_url,
            model_name=cfg.model_name,
            api_key=os.environ.get(API_KEY_ENV, ""),
            timeout=cfg.timeout,
            max_retries=cfg.max_retries,
        )


def load_endpoint(path: str | Path, defaults: LLMConfig | None = None) -> EndpointConfig:
    """
    Read an endpoint TOML file (keys at top level or under [endpoint]).

    An api_key entry in the file is rejected: the key must come from the
    environment.
    """
    p = Path(path)
    if not p.exists():
        raise InputError(f"endpoint file not found: {p}", details={"path": str(p)})
    try:
        raw = toml.loads(p.read_text(encoding="utf-8"))
    except toml.TomlDecodeError as e:
        raise ConfigInvalidError(f"invalid TOML in {p}: {e}") from e
    section = raw.get("endpoint", raw)
    if "api_key" in section:
        raise ConfigInvalidError(
            f"{p} contains api_key; set {API_KEY_ENV} in the environment instead"
        )
    base = defaults or LLMConfig()
    try:
        return EndpointConfig(
            base_url=str(section.get("base_url", base.base_url)),
            model_name=str(section.get("model_name", section.get("model", base.model_name))),
            api_key=os.environ.get(API_KEY_ENV, ""),
            timeout=float(section.get("timeout", base.timeout)),
            max_retries=int(section.get("max_retries", base.max_retries)),
        )
    except (TypeError, ValueError) as e:
        raise ConfigInvalidError(f"invalid value in {p}: {e}") from e


# ── Prompt ────────────────────────────────────────────────────────────────────


def repo_stats(repo: Repository) -> dict[str, Any]:
    """Numeric metric ranges and categorical values present in repo."""
    if len(repo) == 0:
        return {}
    stats: dict[str, Any] = {}
    for metric in NUMERIC_METRICS:
        values = [r.metric(metric) for r in repo]
        stats[metric] = [min(values), max(values)]
    stats["device"] = sorted({r.design.device for r in repo})
    stats["bitcell"] = sorted({r.design.bitcell for r in repo})
    return stats


def _num(value: float) -> str:
    text = repr(float(value))
    return text[:-2] if text.endswith(".0") else text


def build_prompt(
    schema: Mapping[str, Any], stats: Mapping[str, Any] | None = None
) -> list[Message]:
    """
    System and user-template messages for query extraction.

    The system message embeds the schema, unit conventions and, when stats
    is non-empty, the metric ranges of the repository. Equal inputs give
    byte-identical text.
    """
    parts = [
        "You translate hardware design requests for analog in-memory-computing crossbars "
        "into a constraint query.",
        "Reply with a single JSON object and nothing else: no prose, no markdown fences.",
        "The object must validate against this JSON schema:",
        json.dumps(schema, indent=2, sort_keys=True),
        "Hard constraints are requirements every design must meet (op is one of <=, >=, =, "
        "in). Soft objectives are preferences, each with direction minimize or maximize and "
        "a non-negative weight. tie_break lists metrics used to order equal scores.",
        _UNIT_NOTES,
    ]
    if stats:
        lines = ["Values present in the design repository:"]
        for metric in NUMERIC_METRICS:
            if metric in stats:
                lo, hi = stats[metric]
                lines.append(f"- {metric}: [{_num(lo)}, {_num(hi)}] {_METRIC_UNITS[metric]}")
        for metric in CATEGORICAL_METRICS:
            if metric in stats:
                lines.append(f"- {metric}: {', '.join(stats[metric])}")
        parts.append("\n".join(lines))
    return [{"role": "system", "content": "\n\n".join(parts)}]


def _user_message(text: str) -> Message:
    return {"role": "user", "content": f"Design request:\n{text.strip()}"}


def _feedback_message(error: str) -> Message:
    return {
        "role": "user",
        "content": (
            f"That reply was rejected: {error}\n"
            "Reply again with only the corrected JSON object."
        ),
    }


# ── Response parsing ──────────────────────────────────────────────────────────


_FENCE_RE = re.compile(r"^```[a-zA-Z0-9_-]*\s*|\s*```$")


def _json_object(content: str) -> str:
    s = _FENCE_RE.sub("", (content or "").strip()).strip()
    if s.startswith("{") and s.endswith("}"):
        return s
    i, j = s.find("{"), s.rfind("}")
    if i != -1 and j > i:
        return s[i : j + 1]
    return s


def parse_response(content: str) -> ConstraintQuery:
    """
    Validate one assistant reply.

    Raises:
        QueryError: not JSON, or JSON that does not form a valid query.
    """
    try:
        raw = json.loads(_json_object(content))
    except json.JSONDecodeError as e:
        raise QueryError(f"reply is not valid JSON ({e.msg} at char {e.pos})") from None
    try:
        return ConstraintQuery.from_dict(raw)
    except (TypeError, ValueError) as e:
        raise QueryError(f"invalid query value: {e}") from None


# ── Audit log ─────────────────────────────────────────────────────────────────


class AuditLog:
    """Append-only JSONL record of every raw model reply, one writer at a time."""

    def __init__(self, path: str | Path | None) -> None:
        self._path = Path(path).expanduser() if path else None
        self._lock = asyncio.Lock()

    @property
    def path(self) -> Path | None:
        return self._path

    async def append(self, record: Mapping[str, Any]) -> None:
        if self._path is None:
            return
        line = json.dumps(dict(record), sort_keys=True) + "\n"
        async with self._lock:
            self._path.parent.mkdir(parents=True, exist_ok=True)
            with self._path.open("a", encoding="utf-8") as fh:
                fh.write(line)


# ── HTTP client ───────────────────────────────────────────────────────────────


class ChatClient:
    """
    Async client for an OpenAI-compatible chat-completions endpoint.

    Uses one httpx.AsyncClient; close() releases it.
    """

    def __init__(self, cfg: EndpointConfig, client: httpx.AsyncClient | None = None) -> None:
        self._cfg = cfg
        self._client = client or httpx.AsyncClient(timeout=cfg.timeout)

    async def complete(self, messages: Sequence[Message]) -> str:
        """Assistant content of one completion. Raises LLMHTTPError / LLMNetworkError."""
        headers = {"Content-Type": "application/json"}
        if self._cfg.api_key:
            headers["Authorization"] = f"Bearer {self._cfg.api_key}"
        body = {"model": self._cfg.model_name, "messages": list(messages), "temperature": 0}
        try:
            resp = await self._client.post(self._cfg.completions_url, json=body, headers=headers)
        except httpx.TimeoutException as e:
            raise LLMNetworkError(f"endpoint timeout: {e}") from e
        except httpx.HTTPError as e:
            raise LLMNetworkError(f"cannot reach endpoint: {e}") from e

        if resp.status_code >= 400:
            raise LLMHTTPError(resp.status_code, resp.text[:2000])
        try:
            data = resp.json()
            return str(data["choices"][0]["message"]["content"] or "")
        except (ValueError, KeyError, IndexError, TypeError):
            # Malformed envelope is handed to validation as raw text
            return resp.text

    async def close(self) -> None:
        await self._client.aclose()

    async def __aenter__(self) -> ChatClient:
        return self

    async def __aexit__(self, *exc: object) -> None:
        await self.close()


# ── Extraction ────────────────────────────────────────────────────────────────


@dataclass
class Extraction:
    query: ConstraintQuery
    attempts: int
    raw_responses: list[str]


async def extract_with(
    send: Send,
    text: str,
    max_retries: int,
    stats: Mapping[str, Any] | None = None,
    audit: AuditLog | None = None,
    task_id: str = "",
    model: str = "",
) -> Extraction:
    """
    Extraction loop over any transport: send messages, validate the reply,
    re-prompt with the validation error until a query validates.

    Raises:
        RetriesExhaustedError: max_retries replies all failed validation.
        LLMHTTPError, LLMNetworkError: the transport failed.
    """
    messages = build_prompt(QUERY_SCHEMA, stats) + [_user_message(text)]
    raws: list[str] = []
    errors: list[str] = []
    for attempt in range(1, max_retries + 1):
        content = await send(messages)
        raws.append(content)
        try:
            query = parse_response(content)
            error = None
        except QueryError as e:
            query, error = None, e.message
        if audit is not None:
            await audit.append(
                {
                    "ts": time.time(),
                    "task": task_id,
                    "model": model,
                    "attempt": attempt,
                    "raw": content,
                    "error": error,
                }
            )
        if query is not None:
            suffix = f" ({task_id})" if task_id else ""
            logger.info("query extracted on attempt %d%s", attempt, suffix)
            return Extraction(query, attempt, raws)
        assert error is not None
        logger.warning("attempt %d rejected: %s", attempt, error)
        errors.append(error)
        messages = messages + [{"role": "assistant", "content": content}, _feedback_message(error)]
    raise RetriesExhaustedError(max_retries, raws, errors)


async def extract_query(
    text: str,
    cfg: EndpointConfig,
    stats: Mapping[str, Any] | None = None,
    client: ChatClient | None = None,
    audit: AuditLog | None = None,
    task_id: str = "",
) -> Extraction:
    """Extract a ConstraintQuery from text through the configured endpoint."""
    owned = client is None
    chat = client or ChatClient(cfg)
    try:
        return await extract_with(
            chat.complete, text, cfg.max_retries, stats, audit, task_id, cfg.model_name
        )
    finally:
        if owned:
            await chat.close()
