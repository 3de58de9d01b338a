"""Tests for xbarcli/config.py."""

from __future__ import annotations

from pathlib import Path

import pytest
import toml

from xbarcli.config import (
    XbarConfig,
    config_path_in_use,
    config_to_dict,
    get_default_config_path,
    load_config,
    save_config,
)
from xbarcli.exceptions import ConfigInvalidError

# ── load_config ───────────────────────────────────────────────────────────────


def test_load_config_returns_defaults_when_no_file(tmp_path: Path) -> None:
    """load_config should return defaults when config file doesn't exist."""
    config = load_config(str(tmp_path / "nonexistent.toml"))
    assert isinstance(config, XbarConfig)
    assert config.circuit.vdd == 1.0
    assert config.verify.max_rounds == 3
    assert config.sweep.seed == 42
    assert config.output.default_format == "json"


def test_load_config_from_valid_toml(tmp_path: Path) -> None:
    config_file = tmp_path / "config.toml"
    config_file.write_text("""
[circuit]
vdd = 0.8
direct_threshold = 100

[verify]
envelope_slack = 1.2

[paa]
activation = "relu"
fidelity = "parasitic"

[output]
default_format = "table"
""")
    config = load_config(str(config_file))
    assert config.circuit.vdd == 0.8
    assert config.circuit.direct_threshold == 100
    assert config.verify.envelope_slack == 1.2
    assert config.paa.activation == "relu"
    assert config.paa.fidelity == "parasitic"
    assert config.output.default_format == "table"


def test_load_config_invalid_toml_raises(tmp_path: Path) -> None:
    config_file = tmp_path / "bad.toml"
    config_file.write_text("this is [not valid toml\n")
    with pytest.raises(ConfigInvalidError):
        load_config(str(config_file))


@pytest.mark.parametrize(
    "body",
    [
        '[output]\ndefault_format = "xml"\n',
        '[paa]\nactivation = "tanh"\n',
        '[paa]\nfidelity = "spice"\n',
        "[circuit]\nvdd = -1.0\n",
        "[circuit]\ntol = 2.0\n",
        "[llm]\nmax_retries = 0\n",
        '[llm]\nbase_url = "ftp://x"\n',
        "[sweep]\nparallel = 0\n",
        "[verify]\nmax_rounds = 0\n",
        '[circuit]\nvdd = "high"\n',
        'circuit = "flat"\n',
    ],
)
def test_load_config_invalid_values(tmp_path: Path, body: str) -> None:
    config_file = tmp_path / "config.toml"
    config_file.write_text(body)
    with pytest.raises(ConfigInvalidError):
        load_config(str(config_file))


def test_api_key_in_file_is_ignored(tmp_path: Path) -> None:
    config_file = tmp_path / "config.toml"
    config_file.write_text('[llm]\napi_key = "sk-from-file"\n')
    assert load_config(str(config_file)).llm.api_key == ""


# ── Environment overrides ─────────────────────────────────────────────────────


def test_env_overrides(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("XBAR_LLM_API_KEY", "sk-env")
    monkeypatch.setenv("XBAR_SEED", "7")
    monkeypatch.setenv("XBAR_PARALLEL", "4")
    monkeypatch.setenv("XBAR_OUTPUT_FORMAT", "csv")
    monkeypatch.setenv("XBAR_NO_COLOR", "1")
    config = load_config(str(tmp_path / "none.toml"))
    assert config.llm.api_key == "sk-env"
    assert config.sweep.seed == 7
    assert config.sweep.parallel == 4
    assert config.output.default_format == "csv"
    assert config.output.color is False


def test_bad_env_value_does_not_echo(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("XBAR_LLM_MAX_RETRIES", "sk-secret-looking")
    with pytest.raises(ConfigInvalidError) as exc:
        load_config(str(tmp_path / "none.toml"))
    assert "XBAR_LLM_MAX_RETRIES" in exc.value.message


def test_config_path_from_env(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    target = tmp_path / "elsewhere.toml"
    monkeypatch.setenv("XBAR_CONFIG_PATH", str(target))
    assert config_path_in_use() == target
    assert config_path_in_use(str(tmp_path / "explicit.toml")) == tmp_path / "explicit.toml"


# ── save_config ───────────────────────────────────────────────────────────────


def test_save_then_load_round_trip(tmp_path: Path) -> None:
    config = XbarConfig()
    config.circuit.vdd = 0.9
    config.verify.random_vectors = 5
    path = save_config(config, str(tmp_path / "sub" / "config.toml"))
    loaded = load_config(str(path))
    assert loaded.circuit.vdd == 0.9
    assert loaded.verify.random_vectors == 5


def test_save_never_writes_api_key(tmp_path: Path) -> None:
    config = XbarConfig()
    config.llm.api_key = "sk-must-not-persist"
    path = save_config(config, str(tmp_path / "config.toml"))
    text = path.read_text()
    assert "sk-must-not-persist" not in text
    assert "api_key" not in toml.loads(text)["llm"]


def test_config_to_dict_sections() -> None:
    data = config_to_dict(XbarConfig())
    assert set(data) == {"paths", "circuit", "verify", "paa", "sweep", "llm", "output"}
    assert "api_key" not in data["llm"]
    assert "api_key" in config_to_dict(XbarConfig(), include_secrets=True)["llm"]


def test_default_config_path() -> None:
    path = get_default_config_path()
    assert path.name == "config.toml"
    assert path.parent.name == ".xbarcli"
