"""Output format routing for xbarcli.

Converts result dicts to the requested format: json, jsonl, table, csv.

Design rules:
- JSON: 2-space indent, deterministic key order, utf-8
- JSONL: one JSON object per record, no trailing whitespace
- Table: Rich-formatted, red=Error diagnostics, yellow=Warning
- CSV: RFC 4180, header row always present

All functions return strings. The caller writes to stdout.
"""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Any

import numpy as np
from rich.console import Console
from rich.table import Table
from rich.text import Text

VALID_FORMATS = {"json", "jsonl", "table", "csv"}

# List-valued keys that carry the records of a result, in lookup order.
RECORD_KEYS = ("results", "diagnostics", "designs", "groups", "front", "outcomes", "records")


class NumpyEncoder(json.JSONEncoder):
    """JSON encoder that handles numpy scalars and arrays."""

    def default(self, obj: Any) -> Any:
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        return super().default(obj)


def format_output(data: Any, fmt: str) -> str:
    """
    Format data for stdout output.

    Raises:
        ValueError: If fmt is not a recognised format.
    """
    fmt = fmt.lower()
    if fmt not in VALID_FORMATS:
        raise ValueError(f"Unknown format {fmt!r}. Valid: {sorted(VALID_FORMATS)}")

    if fmt == "jsonl":
        return format_jsonl(data)
    elif fmt == "table":
        return format_table(data)
    elif fmt == "csv":
        return format_csv(data)
    return format_json(data)


def _records(data: Any) -> list[dict[str, Any]] | None:
    if isinstance(data, list):
        return data
    if isinstance(data, dict):
        for key in RECORD_KEYS:
            if isinstance(data.get(key), list):
                return data[key]
    return None


# ── JSON ─────────────────────────────────────────────────────────────────────


def format_json(data: Any) -> str:
    """Pretty-print data as JSON (2-space indent, sorted keys)."""
    return json.dumps(data, indent=2, sort_keys=True, cls=NumpyEncoder, ensure_ascii=False)


# ── JSONL ────────────────────────────────────────────────────────────────────


def format_jsonl(data: Any) -> str:
    """One line per record; a dict without records becomes a single line."""
    records = _records(data)
    items = records if records is not None else [data]
    return "\n".join(json.dumps(item, sort_keys=True, cls=NumpyEncoder) for item in items)


# ── Table ────────────────────────────────────────────────────────────────────


def format_table(data: Any) -> str:
    """
    Format as a Rich terminal table.

    Handles diagnostics lists, ranked results, report summaries and any list
    of flat records; everything else is shown as key/value pairs.
    """
    buf = io.StringIO()
    console = Console(file=buf, highlight=False, markup=True, width=160)

    if isinstance(data, dict) and "diagnostics" in data:
        _render_diagnostics(console, data)
    elif isinstance(data, dict) and "groups" in data:
        _render_summary(console, data)
    elif (records := _records(data)) is not None:
        title = data.get("title", "") if isinstance(data, dict) else ""
        _render_records(console, records, title)
        if isinstance(data, dict):
            extra = {
                k: v for k, v in data.items() if not isinstance(v, list | dict) and k != "title"
            }
            if extra:
                _render_pairs(console, extra)
    elif isinstance(data, dict):
        _render_pairs(console, data)
    else:
        console.print(str(data))

    return buf.getvalue()


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}" if math.isfinite(value) else str(value)
    if isinstance(value, list | tuple):
        return ", ".join(_cell(v) for v in value)
    if value is None:
        return "—"
    return str(value)


def _render_records(console: Console, records: list[dict[str, Any]], title: str = "") -> None:
    if not records:
        console.print("[dim]no records[/dim]")
        return
    flat = [_flatten_dict(r) for r in records]
    headers = list(dict.fromkeys(k for row in flat for k in row))
    table = Table(title=title or None, show_header=True, header_style="bold blue")
    for h in headers:
        table.add_column(h, justify="right" if isinstance(flat[0].get(h), int | float) else "left")
    for row in flat:
        table.add_row(*(_cell(row.get(h)) for h in headers))
    console.print(table)


def _render_pairs(console: Console, data: dict[str, Any]) -> None:
    table = Table(show_header=False)
    table.add_column("key", style="cyan")
    table.add_column("value")
    for k, v in _flatten_dict(data).items():
        table.add_row(k, _cell(v))
    console.print(table)


def _severity_style(severity: str) -> str:
    return "bold red" if severity == "error" else "yellow"


def _render_diagnostics(console: Console, data: dict[str, Any]) -> None:
    diags = data.get("diagnostics", [])
    if not diags:
        console.print(f"[green]clean[/green] {data.get('design_key', '')}")
        return
    title = f"Diagnostics {data.get('design_key', '')}".strip()
    table = Table(title=title, header_style="bold blue")
    table.add_column("Severity", justify="center")
    table.add_column("Code", style="cyan", no_wrap=True)
    table.add_column("Element")
    table.add_column("Line", justify="right")
    table.add_column("Message")
    for d in diags:
        severity = d.get("severity", "")
        table.add_row(
            Text(severity, style=_severity_style(severity)),
            d.get("code", ""),
            d.get("element", ""),
            _cell(d.get("line")),
            d.get("message", ""),
        )
    console.print(table)
    errors = sum(1 for d in diags if d.get("severity") == "error")
    console.print(f"Errors: [bold red]{errors}[/bold red]  Warnings: {len(diags) - errors}")


def _render_summary(console: Console, data: dict[str, Any]) -> None:
    console.print(
        f"Entries: [bold]{data.get('entries', 0)}[/bold]  "
        f"Pareto front: [bold]{len(data.get('front', []))}[/bold]"
    )
    for axis, rows in data["groups"].items():
        _render_records(console, rows, f"by {axis}")
    if data.get("front"):
        _render_records(console, data["front"], "Pareto front")


# ── CSV ──────────────────────────────────────────────────────────────────────


def format_csv(data: Any) -> str:
    """
    Format as CSV with a header row.

    Flattens nested structures to the extent possible.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    rows = _records(data) or []

    if not rows:
        writer.writerow(["value"])
        writer.writerow([json.dumps(data, sort_keys=True, cls=NumpyEncoder)])
        return buf.getvalue()

    flat_rows = [_flatten_dict(r) for r in rows]
    headers = list(dict.fromkeys(k for row in flat_rows for k in row))
    writer.writerow(headers)
    for row in flat_rows:
        writer.writerow([row.get(h, "") for h in headers])
    return buf.getvalue()


def _flatten_dict(d: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    """Flatten a nested dict for CSV and table output."""
    result: dict[str, Any] = {}
    for k, v in d.items():
        full_key = f"{prefix}{k}" if not prefix else f"{prefix}.{k}"
        if isinstance(v, dict):
            result.update(_flatten_dict(v, full_key))
        elif isinstance(v, list | tuple):
            result[full_key] = json.dumps(v, cls=NumpyEncoder)
        elif isinstance(v, np.generic):
            result[full_key] = v.item()
        else:
            result[full_key] = v
    return result


# ── Utility ──────────────────────────────────────────────────────────────────


def mask_secret(key: str) -> str:
    """
    Mask a secret for safe display.

    'abcdefg123' → 'abcd****'
    '' → '****'
    """
    if not key or len(key) <= 4:
        return "****"
    return key[:4] + "****"
