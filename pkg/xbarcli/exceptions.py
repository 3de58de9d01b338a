"""
Custom exception hierarchy for xbarcli.

Each exception maps to a CLI exit code and a JSON error_code field.
cli.py catches all XbarError subclasses and formats them as JSON on stderr.

Exit code contract:
  0 — success
  1 — well-formed negative result (Error diagnostics, no feasible design,
      failed sweep points). Raised as data, not exceptions, except
      NoFeasibleDesignError which the query commands surface directly.
  2 — invocation or input error (every other XbarError)

Verification findings are never exceptions; see xbarcli.verify.Diagnostic.
"""

from __future__ import annotations

from typing import Any


class XbarError(Exception):
    """Base exception for all xbarcli errors."""

    exit_code: int = 2
    error_code: str = "unknown_error"

    def __init__(self, message: str, details: dict | None = None) -> None:
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> dict:
        return {
            "error": self.error_code,
            "message": self.message,
            "details": self.details,
        }


class InputError(XbarError):
    """A required input file is missing or unreadable."""

    error_code = "input_error"


# ── Configuration ─────────────────────────────────────────────────────────────


class ConfigError(XbarError):
    """Config file or grid/device tables are missing or malformed."""

    error_code = "config_error"


class ConfigInvalidError(ConfigError):
    """Config file exists but contains invalid TOML or invalid values."""

    error_code = "config_invalid"


class EmptyAxisError(ConfigError):
    """A grid axis has no values."""

    error_code = "empty_axis"

    def __init__(self, axis: str) -> None:
        super().__init__(f"grid axis {axis!r} is empty", details={"axis": axis})
        self.axis = axis


# ── Design points ─────────────────────────────────────────────────────────────


class DesignError(XbarError):
    """Invalid design point, design key or device/bitcell name."""

    error_code = "design_error"


# ── Netlists ──────────────────────────────────────────────────────────────────


class NetlistError(XbarError):
    """Netlist construction or parsing failed."""

    error_code = "netlist_error"


class ContractError(NetlistError):
    """Shapes or lengths of inputs disagree."""

    error_code = "contract_error"


class ConductanceRangeError(NetlistError):
    """A conductance lies outside the device's [1/r_off, 1/r_on] window."""

    error_code = "conductance_out_of_range"

    def __init__(
        self, row: int, col: int, polarity: str, value: float, lo: float, hi: float
    ) -> None:
        super().__init__(
            f"conductance {value:.6g} S at ({row},{col},{polarity}) outside [{lo:.6g}, {hi:.6g}]",
            details={"row": row, "col": col, "polarity": polarity, "value": value},
        )
        self.row = row
        self.col = col
        self.polarity = polarity


class SpiceSyntaxError(NetlistError):
    """A SPICE line could not be parsed."""

    error_code = "syntax_error"

    def __init__(self, message: str, line: int, column: int, token: str, **kwargs: Any) -> None:
        super().__init__(
            f"{message} at line {line}, column {column}: {token!r}",
            details={"line": line, "column": column, "token": token},
        )
        self.line = line
        self.column = column
        self.token = token


class UnsupportedElementError(SpiceSyntaxError):
    """Card type outside the supported dialect subset."""

    error_code = "unsupported_element"

    def __init__(self, line: int, token: str) -> None:
        super().__init__("unsupported element kind", line=line, column=1, token=token)
        self.message = f"unsupported element kind at line {line}: {token!r}"
        self.args = (self.message,)


class DuplicateElementError(NetlistError):
    """Two elements share a name."""

    error_code = "duplicate_name"

    def __init__(self, name: str, first_line: int, second_line: int) -> None:
        super().__init__(
            f"duplicate element name {name!r} at lines {first_line} and {second_line}",
            details={"name": name, "lines": [first_line, second_line]},
        )
        self.name = name
        self.lines = (first_line, second_line)


# ── Circuit solving ───────────────────────────────────────────────────────────


class CircuitError(XbarError):
    """Nodal analysis failed."""

    error_code = "circuit_error"


class IslandError(CircuitError):
    """A group of nodes has no conductive path to ground or a source."""

    error_code = "isolated_island"

    def __init__(self, nodes: list[str]) -> None:
        super().__init__(
            f"isolated island with no path to ground: {', '.join(nodes)}",
            details={"nodes": nodes},
        )
        self.nodes = nodes


class SingularSystemError(CircuitError):
    """Factorization hit a zero pivot."""

    error_code = "singular_system"

    def __init__(self, node: str) -> None:
        super().__init__(f"singular system at node {node!r}", details={"node": node})
        self.node = node


class NonConvergenceError(CircuitError):
    """Iterative solve did not reach tolerance."""

    error_code = "non_convergence"

    def __init__(self, residual: float, iterations: int) -> None:
        super().__init__(
            f"solver did not converge after {iterations} iterations (best residual {residual:.3e})",
            details={"residual": residual, "iterations": iterations},
        )
        self.residual = residual
        self.iterations = iterations


class SourceBindingError(CircuitError):
    """A voltage source is not referenced to ground or two sources fight over a node."""

    error_code = "source_conflict"


class RangeError(CircuitError):
    """A behavioral converter input is outside its range."""

    error_code = "range_error"


# ── Data files ────────────────────────────────────────────────────────────────


class DataError(XbarError):
    """A data file (IDX, weights, repository) is malformed."""

    error_code = "data_error"


class BadMagicError(DataError):
    """IDX file magic number does not match."""

    error_code = "bad_magic"


class TruncatedPayloadError(DataError):
    """IDX payload shorter than its header promises."""

    error_code = "truncated_payload"


class CountMismatchError(DataError):
    """Image and label counts differ."""

    error_code = "count_mismatch"


class WeightsFormatError(DataError):
    """Weights JSON does not describe a consistent network."""

    error_code = "weights_format"


class RepositoryFormatError(DataError):
    """Repository CSV/JSONL row is malformed."""

    error_code = "repository_format"

    def __init__(self, message: str, row: int | None = None) -> None:
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"{message}{where}", details={"row": row})
        self.row = row


class CalibrationError(XbarError):
    """Area-model calibration cannot proceed."""

    error_code = "calibration_error"


# ── Queries ───────────────────────────────────────────────────────────────────


class QueryError(XbarError):
    """Constraint query is malformed or references unknown metrics."""

    error_code = "query_error"


class DslSyntaxError(QueryError):
    """Constraint DSL line could not be parsed."""

    error_code = "dsl_syntax_error"


class NoFeasibleDesignError(XbarError):
    """No repository entry satisfies every hard constraint."""

    exit_code = 1
    error_code = "no_feasible_design"


# ── LLM bridge ────────────────────────────────────────────────────────────────


class LLMError(XbarError):
    """Chat endpoint failed or produced no valid query."""

    error_code = "llm_error"


class LLMHTTPError(LLMError):
    """Endpoint answered with a non-2xx status."""

    error_code = "llm_http_error"

    def __init__(self, status: int, body: str = "") -> None:
        super().__init__(f"endpoint returned HTTP {status}", details={"status": status})
        self.status = status
        self.body = body


class LLMNetworkError(LLMError):
    """Timeout or connection failure talking to the endpoint."""

    error_code = "llm_network_error"


class RetriesExhaustedError(LLMError):
    """Every attempt produced an invalid query."""

    error_code = "llm_retries_exhausted"

    def __init__(self, attempts: int, raw_responses: list[str], errors: list[str]) -> None:
        super().__init__(
            f"no valid query after {attempts} attempts",
            details={"attempts": attempts, "errors": errors},
        )
        self.attempts = attempts
        self.raw_responses = raw_responses
        self.errors = errors
