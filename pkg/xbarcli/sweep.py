"""
Grid sweeps: evaluate every design point and persist a repository plus a
run manifest.

Points are pure functions of (design, weights, images, catalog), so they
run in a process pool and are committed through one RepositoryStore. The
output file is sorted by design_key, which makes it independent of the
parallelism degree and of completion order. A point that fails is
recorded in the manifest and the sweep carries on.
"""

from __future__ import annotations

import hashlib
import json
import logging
import sys
import time
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import UTC, datetime
from pathlib import Path
from typing import Any

from xbarcli import __version__
from xbarcli.design_space import DeviceCatalog, design_key
from xbarcli.dse import Repository, RepositoryStore, save_repository
from xbarcli.exceptions import XbarError
from xbarcli.mnist import MnistDataset
from xbarcli.models import DesignPoint, EvalResult
from xbarcli.paa import DEFAULT_AREA_PARAMS, IDEAL_MAC, AreaParams, evaluate_design
from xbarcli.weights import MlpWeights

logger = logging.getLogger(__name__)


@dataclass
class SweepInputs:
    """Everything a worker needs besides the design point."""

    weights: MlpWeights
    images: MnistDataset
    catalog: DeviceCatalog
    params: AreaParams = DEFAULT_AREA_PARAMS
    fidelity: str = IDEAL_MAC
    vdd: float = 1.0
    wire_r: float | None = None


@dataclass(frozen=True)
class PointFailure:
    design_key: str
    error: str
    message: str

    def to_dict(self) -> dict[str, str]:
        return {"design_key": self.design_key, "error": self.error, "message": self.message}


@dataclass
class SweepOutcome:
    repo: Repository
    failures: list[PointFailure]
    duration_s: float
    points: int


# ── Worker ────────────────────────────────────────────────────────────────────

_WORKER_INPUTS: SweepInputs | None = None


def _init_worker(inputs: SweepInputs) -> None:
    global _WORKER_INPUTS
    _WORKER_INPUTS = inputs


Outcome = tuple[EvalResult | None, PointFailure | None]


def _evaluate(dp: DesignPoint, inputs: SweepInputs | None = None) -> Outcome:
    inputs = inputs or _WORKER_INPUTS
    assert inputs is not None, "worker not initialised"
    try:
        result = evaluate_design(
            dp,
            inputs.weights,
            inputs.images,
            params=inputs.params,
            fidelity=inputs.fidelity,
            catalog=inputs.catalog,
            vdd=inputs.vdd,
            wire_r=inputs.wire_r,
        )
        return result, None
    except XbarError as e:
        return None, PointFailure(design_key(dp), e.error_code, e.message)


def run_sweep(
    points: Sequence[DesignPoint],
    inputs: SweepInputs,
    parallel: int = 1,
    on_done: Callable[[str], None] | None = None,
) -> SweepOutcome:
    """
    Evaluate points, serially when parallel <= 1, else in a process pool.

    on_done is called with each finished design key (progress reporting).
    """
    started = time.perf_counter()
    store = RepositoryStore()
    results: list[EvalResult] = []
    failures: list[PointFailure] = []

    def collect(key: str, outcome: Outcome) -> None:
        result, failure = outcome
        if result is not None:
            results.append(result)
        if failure is not None:
            logger.warning("%s failed: %s", failure.design_key, failure.message)
            failures.append(failure)
        if on_done is not None:
            on_done(key)

    if parallel <= 1 or len(points) <= 1:
        for dp in points:
            collect(design_key(dp), _evaluate(dp, inputs))
    else:
        with ProcessPoolExecutor(
            max_workers=parallel, initializer=_init_worker, initargs=(inputs,)
        ) as pool:
            futures = {pool.submit(_evaluate, dp): design_key(dp) for dp in points}
            for future in as_completed(futures):
                collect(futures[future], future.result())

    repo = store.commit(results)
    failures.sort(key=lambda f: f.design_key)
    duration = time.perf_counter() - started
    logger.info(
        "swept %d points in %.2f s: %d ok, %d failed",
        len(points),
        duration,
        len(repo),
        len(failures),
    )
    return SweepOutcome(repo, failures, duration, len(points))


# ── Manifest ──────────────────────────────────────────────────────────────────


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest_path(out: str | Path) -> Path:
    return Path(f"{out}.manifest.json")


@dataclass
class RunManifest:
    """Provenance of one sweep or eval run. Digests are SHA-256 of content."""

    command: list[str]
    config_sha256: str
    inputs: dict[str, str] = field(default_factory=dict)  # path → digest
    tool_version: str = __version__
    started_at: str = ""
    duration_s: float = 0.0
    results: list[str] = field(default_factory=list)
    points: int = 0
    failures: list[PointFailure] = field(default_factory=list)
    parallel: int = 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "config_sha256": self.config_sha256,
            "inputs": dict(sorted(self.inputs.items())),
            "tool_version": self.tool_version,
            "started_at": self.started_at,
            "duration_s": self.duration_s,
            "results": self.results,
            "points": self.points,
            "failures": [f.to_dict() for f in self.failures],
            "parallel": self.parallel,
        }

    def write(self, path: str | Path) -> Path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        return p


def digest_inputs(paths: Iterable[str | Path | None]) -> dict[str, str]:
    return {str(p): sha256_file(p) for p in paths if p and Path(p).is_file()}


def sweep_to_file(
    points: Sequence[DesignPoint],
    inputs: SweepInputs,
    out: str | Path,
    config: dict[str, Any],
    input_paths: Iterable[str | Path | None] = (),
    parallel: int = 1,
    on_done: Callable[[str], None] | None = None,
    argv: Sequence[str] | None = None,
) -> tuple[SweepOutcome, RunManifest]:
    """run_sweep, then write the repository and <out>.manifest.json."""
    started_at = datetime.now(tz=UTC).isoformat(timespec="seconds")
    outcome = run_sweep(points, inputs, parallel, on_done)
    repo_path = save_repository(outcome.repo, out)
    config_bytes = json.dumps(config, sort_keys=True).encode("utf-8")
    manifest = RunManifest(
        command=list(argv if argv is not None else sys.argv),
        config_sha256=sha256_bytes(config_bytes),
        inputs=digest_inputs(input_paths),
        started_at=started_at,
        duration_s=round(outcome.duration_s, 6),
        results=[str(repo_path)],
        points=outcome.points,
        failures=outcome.failures,
        parallel=parallel,
    )
    manifest.write(manifest_path(out))
    return outcome, manifest
