"""Tests for xbarcli/sweep.py — grid sweeps and run manifests."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from xbarcli.design_space import DeviceCatalog
from xbarcli.dse import Repository, load_repository
from xbarcli.mnist import MnistDataset
from xbarcli.models import DesignPoint, Mode
from xbarcli.sweep import (
    SweepInputs,
    manifest_path,
    run_sweep,
    sha256_bytes,
    sha256_file,
    sweep_to_file,
)
from xbarcli.weights import MlpWeights

POINTS = [
    DesignPoint(7, "PCM", "1T1R", 64, 64, Mode.analog()),
    DesignPoint(14, "RRAM", "2T1R", 32, 32, Mode.digital(4)),
    DesignPoint(20, "MRAM", "1T1R", 64, 64, Mode.analog(), (2, 2)),
]


@pytest.fixture
def inputs(weights: MlpWeights, images: MnistDataset, catalog: DeviceCatalog) -> SweepInputs:
    return SweepInputs(weights, images.head(4), catalog)


def test_serial_sweep_evaluates_every_point(inputs: SweepInputs) -> None:
    seen: list[str] = []
    outcome = run_sweep(POINTS, inputs, on_done=seen.append)
    assert outcome.points == 3
    assert len(outcome.repo) == 3
    assert outcome.failures == []
    assert len(seen) == 3


def test_failed_point_is_recorded_and_sweep_continues(inputs: SweepInputs) -> None:
    bad = DesignPoint(7, "FERAM", "1T1R", 16, 16, Mode.analog())
    outcome = run_sweep([*POINTS[:2], bad], inputs)
    assert len(outcome.repo) == 2
    assert [f.design_key for f in outcome.failures] == ["t7_feram_1t1r_16x16_analog_p1x1"]
    assert outcome.failures[0].error == "design_error"


def test_output_independent_of_parallelism(tmp_path: Path, inputs: SweepInputs) -> None:
    serial = tmp_path / "serial.jsonl"
    pooled = tmp_path / "pooled.jsonl"
    sweep_to_file(POINTS, inputs, serial, {"seed": 0}, parallel=1, argv=["sweep"])
    sweep_to_file(list(reversed(POINTS)), inputs, pooled, {"seed": 0}, parallel=2, argv=["sweep"])
    assert serial.read_bytes() == pooled.read_bytes()
    assert len(load_repository(pooled)) == 3


def test_manifest_contents(tmp_path: Path, inputs: SweepInputs) -> None:
    weights_file = tmp_path / "w.json"
    weights_file.write_text("{}")
    out = tmp_path / "repo.csv"
    _, manifest = sweep_to_file(
        POINTS[:2],
        inputs,
        out,
        {"seed": 3},
        input_paths=[weights_file, None, tmp_path / "absent"],
        argv=["xbarcli", "sweep"],
    )
    written = json.loads(manifest_path(out).read_text())
    assert written == manifest.to_dict()
    assert written["command"] == ["xbarcli", "sweep"]
    assert written["config_sha256"] == sha256_bytes(b'{"seed": 3}')
    assert written["inputs"] == {str(weights_file): sha256_file(weights_file)}
    assert written["results"] == [str(out)]
    assert written["points"] == 2
    assert written["failures"] == []


def test_sha256_helpers(tmp_path: Path) -> None:
    p = tmp_path / "x"
    p.write_bytes(b"abc")
    digest = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    assert sha256_file(p) == sha256_bytes(b"abc") == digest


@pytest.mark.slow
def test_seed_table_sweep_is_byte_identical_across_pools(
    tmp_path: Path,
    weights: MlpWeights,
    images: MnistDataset,
    catalog: DeviceCatalog,
    paper_repo: Repository,
) -> None:
    points = [r.design for r in paper_repo]
    assert len(points) == 60
    inputs = SweepInputs(weights, images.head(2), catalog)
    serial = tmp_path / "serial.jsonl"
    pooled = tmp_path / "pooled.jsonl"
    _, serial_manifest = sweep_to_file(points, inputs, serial, {}, parallel=1, argv=["sweep"])
    _, pooled_manifest = sweep_to_file(points, inputs, pooled, {}, parallel=2, argv=["sweep"])
    assert serial.read_bytes() == pooled.read_bytes()
    assert len(load_repository(serial)) == 60
    for manifest in (serial_manifest, pooled_manifest):
        written = json.loads(manifest_path(manifest.results[0]).read_text())
        assert written["points"] == 60
        assert written["duration_s"] > 0
    assert json.loads(manifest_path(pooled).read_text())["parallel"] == 2
