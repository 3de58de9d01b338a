"""Tests for xbarcli/cli.py — Click CLI entry point."""

from __future__ import annotations

import json
from pathlib import Path

import httpx
import pytest
import respx
from click.testing import CliRunner

from xbarcli.cli import cli
from xbarcli.passk import load_tasks
from xbarcli.query_dsl import parse_query

DESIGN16 = "t7_pcm_1t1r_16x16_analog_p1x1"
TOP_KEY = "t7_pcm_1t1r_64x64_dx_p1x1"


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


@pytest.fixture
def config_file(tmp_path: Path) -> Path:
    """Config that keeps the LLM audit log inside tmp_path."""
    p = tmp_path / "config.toml"
    p.write_text(
        f'[llm]\naudit_log = "{tmp_path / "audit.jsonl"}"\n'
        'base_url = "http://llm.test/v1"\nmodel_name = "test-model"\n'
    )
    return p


def run_json(runner: CliRunner, args: list[str], code: int = 0) -> dict:
    result = runner.invoke(cli, ["--json", *args])
    assert result.exit_code == code, result.output
    return json.loads(result.stdout)


# ── version / config ──────────────────────────────────────────────────────────


def test_cli_version(runner: CliRunner) -> None:
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert "0.1.0" in result.output


def test_config_init(runner: CliRunner, tmp_path: Path) -> None:
    config_path = tmp_path / "config.toml"
    result = runner.invoke(cli, ["--config", str(config_path), "config", "init"])
    assert result.exit_code == 0
    assert json.loads(result.stdout)["status"] == "initialized"
    assert config_path.exists()


def test_config_init_already_exists(runner: CliRunner, tmp_path: Path) -> None:
    config_path = tmp_path / "config.toml"
    config_path.write_text("[circuit]\n")
    result = runner.invoke(cli, ["--config", str(config_path), "config", "init"])
    assert json.loads(result.stdout)["status"] == "already_exists"


def test_config_init_force_backs_up(runner: CliRunner, tmp_path: Path) -> None:
    config_path = tmp_path / "config.toml"
    config_path.write_text("[circuit]\nvdd = 0.5\n")
    result = runner.invoke(cli, ["--config", str(config_path), "config", "init", "--force"])
    output = json.loads(result.stdout)
    assert output["status"] == "reinitialized"
    assert Path(output["backup"]).read_text() == "[circuit]\nvdd = 0.5\n"


def test_config_show_masks_key(
    runner: CliRunner, config_file: Path, monkeypatch: pytest.MonkeyPatch
) -> None:
    monkeypatch.setenv("XBAR_LLM_API_KEY", "sk-very-secret")
    result = runner.invoke(cli, ["--config", str(config_file), "--json", "config", "show"])
    assert result.exit_code == 0
    assert "sk-very-secret" not in result.output
    data = json.loads(result.stdout)
    assert data["llm"]["api_key"] == "sk-v****"
    assert data["llm"]["model_name"] == "test-model"


# ── enumerate ─────────────────────────────────────────────────────────────────


def test_enumerate_custom_grid(runner: CliRunner, tmp_path: Path) -> None:
    grid = tmp_path / "grid.toml"
    grid.write_text(
        'techs = [7]\ndevices = ["PCM", "RRAM"]\nbitcells = ["1T1R"]\nsizes = [16, 32]\n'
        "bits = [4]\nanalog = true\n"
    )
    data = run_json(runner, ["enumerate", "--grid", str(grid)])
    assert data["count"] == 8
    keys = [d["design_key"] for d in data["designs"]]
    assert keys == sorted(keys)
    assert DESIGN16 in keys


def test_enumerate_empty_axis_exits_2(runner: CliRunner, tmp_path: Path) -> None:
    grid = tmp_path / "grid.toml"
    grid.write_text("techs = []\n")
    result = runner.invoke(cli, ["enumerate", "--grid", str(grid)])
    assert result.exit_code == 2
    assert "empty_axis" in result.output


# ── netlist / verify / fault-campaign ─────────────────────────────────────────


def test_netlist_then_verify(runner: CliRunner, tmp_path: Path) -> None:
    out = tmp_path / "net" / "x.sp"
    data = run_json(runner, ["netlist", "--design", DESIGN16, "--out", str(out)])
    assert data["accepted"] is True
    assert data["records"][0]["rounds"] == 1
    assert out.read_text().rstrip().endswith(".END")

    report = run_json(runner, ["verify", "--netlist", str(out), "--design", DESIGN16, "--dynamic"])
    assert report["errors"] == 0
    assert report["diagnostics"] == []


def test_verify_reports_missing_cell(runner: CliRunner, tmp_path: Path) -> None:
    out = tmp_path / "x.sp"
    run_json(runner, ["netlist", "--design", DESIGN16, "--out", str(out), "--no-check"])
    lines = [ln for ln in out.read_text().splitlines() if not ln.startswith("Rp_r3_c5 ")]
    out.write_text("\n".join(lines) + "\n")
    report = run_json(runner, ["verify", "--netlist", str(out), "--design", DESIGN16], code=1)
    assert report["errors"] >= 1
    assert {"code", "severity", "element", "message", "line"} <= set(report["diagnostics"][0])


def test_verify_accepts_json_after_command(runner: CliRunner, tmp_path: Path) -> None:
    out = tmp_path / "x.sp"
    run_json(runner, ["netlist", "--design", DESIGN16, "--out", str(out), "--no-check"])
    result = runner.invoke(
        cli,
        ["--format", "table", "verify", "--netlist", str(out), "--design", DESIGN16, "--json"],
    )
    assert result.exit_code == 0, result.output
    report = json.loads(result.stdout)
    assert report["errors"] == 0
    assert report["design_key"] == DESIGN16


@pytest.mark.parametrize(
    "args",
    [["enumerate", "--json"], ["seed-paper", "--out", "{tmp}/r.csv", "--json"]],
)
def test_every_command_accepts_json(runner: CliRunner, tmp_path: Path, args: list[str]) -> None:
    args = [a.replace("{tmp}", str(tmp_path)) for a in args]
    result = runner.invoke(cli, ["--format", "csv", *args])
    assert result.exit_code == 0, result.output
    assert isinstance(json.loads(result.stdout), dict)


def test_config_show_accepts_json(runner: CliRunner, config_file: Path) -> None:
    result = runner.invoke(
        cli, ["--config", str(config_file), "--format", "table", "config", "show", "--json"]
    )
    assert result.exit_code == 0, result.output
    assert json.loads(result.stdout)["llm"]["model_name"] == "test-model"


def test_verify_missing_file(runner: CliRunner, tmp_path: Path) -> None:
    result = runner.invoke(
        cli, ["verify", "--netlist", str(tmp_path / "nope.sp"), "--design", DESIGN16]
    )
    assert result.exit_code == 2
    assert "input_error" in result.output


def test_verify_bad_design_key(runner: CliRunner, tmp_path: Path) -> None:
    out = tmp_path / "x.sp"
    out.write_text("* empty\n.END\n")
    result = runner.invoke(cli, ["verify", "--netlist", str(out), "--design", "not-a-key"])
    assert result.exit_code == 2
    assert "design_error" in result.output


def test_partitioned_netlist_writes_one_file_per_tile(runner: CliRunner, tmp_path: Path) -> None:
    out = tmp_path / "big.sp"
    key = "t7_pcm_1t1r_32x32_analog_p2x2"
    data = run_json(runner, ["netlist", "--design", key, "--out", str(out), "--no-check"])
    paths = sorted(Path(r["path"]).name for r in data["records"])
    assert paths == ["big.t0_0.sp", "big.t0_1.sp", "big.t1_0.sp", "big.t1_1.sp"]


def test_fault_campaign(runner: CliRunner) -> None:
    args = ["fault-campaign", "--design", DESIGN16, "--seeds", "2"]
    args += ["--kind", "ground_detach", "--kind", "polarity_mixup"]
    data = run_json(runner, args)
    assert data["injections"] == 4
    assert data["undetected"] == 0


# ── eval / sweep / calibrate ──────────────────────────────────────────────────


def test_eval_one_design(runner: CliRunner, tmp_path: Path) -> None:
    out = tmp_path / "one.jsonl"
    key = "t7_pcm_1t1r_64x64_analog_p1x1"
    data = run_json(runner, ["eval", "--design", key, "--n", "3", "--out", str(out)])
    assert data["design_key"] == key
    assert data["n_images"] == 3
    assert data["area_um2"] == pytest.approx(2156.134, rel=1e-3)
    assert data["source"] == "internal_solver"
    assert out.exists()
    assert Path(f"{out}.manifest.json").exists()


def test_eval_images_without_labels(runner: CliRunner, tmp_path: Path) -> None:
    result = runner.invoke(
        cli, ["eval", "--design", DESIGN16, "--images", str(tmp_path / "i")]
    )
    assert result.exit_code == 2
    assert "--labels" in result.output


def test_sweep_small_grid(runner: CliRunner, tmp_path: Path) -> None:
    grid = tmp_path / "grid.toml"
    grid.write_text(
        'techs = [7]\ndevices = ["PCM"]\nbitcells = ["1T1R", "2T1R"]\nsizes = [64]\n'
        "bits = []\nanalog = true\n"
    )
    out = tmp_path / "repo.csv"
    data = run_json(runner, ["sweep", "--grid", str(grid), "--n", "2", "--out", str(out)])
    assert data["points"] == data["entries"] == 2
    assert data["failures"] == []
    manifest = json.loads(Path(f"{out}.manifest.json").read_text())
    assert str(grid) in manifest["inputs"]


def test_calibrate_embedded_table(runner: CliRunner, tmp_path: Path) -> None:
    out = tmp_path / "params.json"
    data = run_json(runner, ["calibrate", "--out", str(out)])
    assert data["rows"] == 60
    assert data["max_abs_rel_error"] <= 0.15
    assert json.loads(out.read_text()) == data["params"]


# ── seed / query / pareto / report ────────────────────────────────────────────


def test_seed_then_query(runner: CliRunner, tmp_path: Path) -> None:
    repo = tmp_path / "repo.csv"
    seeded = run_json(runner, ["seed-paper", "--out", str(repo)])
    assert seeded["entries"] == 60
    data = run_json(
        runner,
        ["query", "--repo", str(repo), "--dsl", "power <= 3W; accuracy >= 96%; minimize power"],
    )
    assert data["top"] == TOP_KEY
    assert data["results"][0]["design_key"] == TOP_KEY


def test_query_from_file_with_limit(runner: CliRunner, tmp_path: Path) -> None:
    dsl = tmp_path / "q.dsl"
    dsl.write_text("# cheapest\nminimize power\n")
    data = run_json(runner, ["query", "--dsl-file", str(dsl), "--limit", "3"])
    assert data["count"] == 60
    assert len(data["results"]) == 3


def test_query_infeasible_exits_1(runner: CliRunner) -> None:
    result = runner.invoke(cli, ["query", "--dsl", "power <= 0.1\nminimize power"])
    assert result.exit_code == 1
    assert "no_feasible_design" in result.output


def test_query_nearest_infeasible(runner: CliRunner) -> None:
    data = run_json(runner, ["query", "--dsl", "power <= 0.1; minimize power; nearest-infeasible"])
    assert data["results"][0]["feasible"] is False


def test_query_syntax_error_exits_2(runner: CliRunner) -> None:
    result = runner.invoke(cli, ["query", "--dsl", "minimize power\nlatency <= 3"])
    assert result.exit_code == 2
    assert "dsl_syntax_error" in result.output


def test_query_requires_dsl(runner: CliRunner) -> None:
    result = runner.invoke(cli, ["query"])
    assert result.exit_code == 2


def test_pareto(runner: CliRunner) -> None:
    data = run_json(runner, ["pareto", "--objectives", "min:power"])
    assert [e["design_key"] for e in data["front"]] == [TOP_KEY]


def test_pareto_bad_objectives(runner: CliRunner) -> None:
    result = runner.invoke(cli, ["pareto", "--objectives", "fastest:latency"])
    assert result.exit_code == 2


def test_report_with_csv(runner: CliRunner, tmp_path: Path) -> None:
    csv_out = tmp_path / "summary.csv"
    data = run_json(runner, ["report", "--csv", str(csv_out)])
    assert data["entries"] == 60
    assert csv_out.read_text().startswith("axis,value,metric,count,min,median,max")


def test_report_table_format(runner: CliRunner) -> None:
    result = runner.invoke(cli, ["--format", "table", "report"])
    assert result.exit_code == 0
    assert "by tech" in result.stdout


# ── LLM bridge ────────────────────────────────────────────────────────────────


def test_passk_dsl_backend(runner: CliRunner) -> None:
    data = run_json(runner, ["passk", "--dsl"])
    assert data["tasks"] == 30
    assert data["pass_at_1"] == 1.0
    assert data["pass_at_3"] == 1.0


def test_passk_requires_one_backend(runner: CliRunner) -> None:
    result = runner.invoke(cli, ["passk"])
    assert result.exit_code == 2
    assert "exactly one" in result.output


def test_passk_script_below_full_marks(
    runner: CliRunner, tmp_path: Path, config_file: Path
) -> None:
    tasks = load_tasks()
    script = {t.id: [parse_query(t.dsl).to_dict()] for t in tasks[1:]}
    script_path = tmp_path / "script.json"
    script_path.write_text(json.dumps(script))
    result = runner.invoke(
        cli, ["--config", str(config_file), "--json", "passk", "--script", str(script_path)]
    )
    assert result.exit_code == 1
    data = json.loads(result.stdout)
    assert data["pass_at_3"] == pytest.approx(29 / 30)


@respx.mock
def test_llm_query(runner: CliRunner, tmp_path: Path, config_file: Path) -> None:
    reply = json.dumps(
        {
            "hard": [
                {"metric": "power", "op": "<=", "value": 3},
                {"metric": "accuracy", "op": ">=", "value": 96},
            ],
            "soft": [{"metric": "power", "direction": "minimize"}],
        }
    )
    respx.post("http://llm.test/v1/chat/completions").mock(
        return_value=httpx.Response(200, json={"choices": [{"message": {"content": reply}}]})
    )
    result = runner.invoke(
        cli,
        ["--config", str(config_file), "--json", "llm-query", "--prompt", "under 3 W, 96%+"],
    )
    assert result.exit_code == 0, result.output
    data = json.loads(result.stdout)
    assert data["top"] == TOP_KEY
    assert data["attempts"] == 1
    assert (tmp_path / "audit.jsonl").exists()


@respx.mock
def test_llm_query_http_error(runner: CliRunner, config_file: Path) -> None:
    respx.post("http://llm.test/v1/chat/completions").mock(return_value=httpx.Response(401))
    result = runner.invoke(cli, ["--config", str(config_file), "llm-query", "--prompt", "x"])
    assert result.exit_code == 2
    assert "llm_http_error" in result.output
