"""
Config loading for xbarcli.

Sources (in precedence order, highest first):
  1. Environment variables (XBAR_*)
  2. config.toml (--config, else XBAR_CONFIG_PATH, else ~/.xbarcli/config.toml)
  3. Built-in defaults

The LLM API key is only ever read from XBAR_LLM_API_KEY. It is never loaded
from, or written to, a config file.

Usage:
    from xbarcli.config import load_config
    config = load_config()
    print(config.circuit.vdd)
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import toml

from xbarcli.exceptions import ConfigInvalidError

# Default config directory and file
DEFAULT_CONFIG_DIR = Path.home() / ".xbarcli"
DEFAULT_CONFIG_PATH = DEFAULT_CONFIG_DIR / "config.toml"

# Environment variable → config key mapping
# Format: (env_var_name, dotted_config_path, type_converter)
_ENV_OVERRIDES: list[tuple[str, str, type]] = [
    ("XBAR_LLM_API_KEY", "llm.api_key", str),
    ("XBAR_LLM_BASE_URL", "llm.base_url", str),
    ("XBAR_LLM_MODEL", "llm.model_name", str),
    ("XBAR_LLM_TIMEOUT", "llm.timeout", float),
    ("XBAR_LLM_MAX_RETRIES", "llm.max_retries", int),
    ("XBAR_DEVICES_PATH", "paths.devices", str),
    ("XBAR_GRID_PATH", "paths.grid", str),
    ("XBAR_PARALLEL", "sweep.parallel", int),
    ("XBAR_SEED", "sweep.seed", int),
    ("XBAR_OUTPUT_FORMAT", "output.default_format", str),
]

VALID_FORMATS = {"json", "jsonl", "table", "csv"}
VALID_ACTIVATIONS = {"sigmoid", "relu"}
VALID_FIDELITIES = {"ideal", "parasitic"}

# Keys that must never be persisted by save_config.
_SECRET_KEYS = {("llm", "api_key")}


@dataclass
class PathsConfig:
    """Override files for the bundled device and grid tables ("" = bundled)."""

    devices: str = ""
    grid: str = ""


@dataclass
class CircuitConfig:
    """Nodal solver settings."""

    vdd: float = 1.0  # volts, DAC full scale
    tol: float = 1e-10  # relative residual
    max_iter_factor: float = 20.0  # max_iter = factor * sqrt(dimension)
    direct_threshold: int = 5000  # unknowns; above this use PCG


@dataclass
class VerifyConfig:
    """Acceptance thresholds for static and dynamic checks."""

    kcl_tol: float = 1e-9  # relative to G_nn * V_max
    deviation_floor: float = 1e-9  # relative, always allowed
    envelope_slack: float = 1.05  # multiplier on the IR-drop envelope
    sign_threshold: float = 1e-6  # relative magnitude below which signs are not compared
    random_vectors: int = 2
    max_rounds: int = 3


@dataclass
class PaaConfig:
    """Evaluation defaults."""

    activation: str = "sigmoid"
    n_images: int = 50
    fidelity: str = "ideal"


@dataclass
class SweepConfig:
    """Sweep worker pool and randomness."""

    parallel: int = 1
    seed: int = 42


@dataclass
class LLMConfig:
    """OpenAI-compatible chat endpoint."""

    base_url: str = "http://localhost:8000/v1"
    model_name: str = "gpt-4o-mini"
    api_key: str = ""  # env only
    timeout: float = 30.0
    max_retries: int = 3
    max_in_flight: int = 4
    audit_log: str = str(DEFAULT_CONFIG_DIR / "llm_audit.jsonl")


@dataclass
class OutputConfig:
    """Output formatting defaults."""

    default_format: str = "json"  # json | jsonl | table | csv
    color: bool = True


@dataclass
class XbarConfig:
    """Full configuration object. Passed via Click context to all commands."""

    paths: PathsConfig = field(default_factory=PathsConfig)
    circuit: CircuitConfig = field(default_factory=CircuitConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    paa: PaaConfig = field(default_factory=PaaConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    llm: LLMConfig = field(default_factory=LLMConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


def load_config(path: str | None = None) -> XbarConfig:
    """
    Load configuration from TOML file + environment variable overrides.

    Args:
        path: Override config file path. If None, uses XBAR_CONFIG_PATH
              env var or default (~/.xbarcli/config.toml).

    Returns:
        XbarConfig with all values resolved.

    Raises:
        ConfigInvalidError: Config file exists but is invalid TOML or values.
    """
    config_path = _resolve_config_path(path)

    raw: dict = {}
    if config_path.exists():
        try:
            raw = toml.load(str(config_path))
        except toml.TomlDecodeError as e:
            raise ConfigInvalidError(f"Invalid TOML in {config_path}: {e}") from e

    config = _dict_to_config(raw)
    _apply_env_overrides(config)
    _validate_config(config)

    return config


def save_config(config: XbarConfig, path: str | None = None) -> Path:
    """
    Serialize XbarConfig to TOML and write to disk (secrets omitted).

    Returns the path where config was written.
    """
    config_path = _resolve_config_path(path)
    config_path.parent.mkdir(parents=True, exist_ok=True)

    data = config_to_dict(config, include_secrets=False)
    with open(config_path, "w") as f:
        toml.dump(data, f)

    return config_path


def config_to_dict(config: XbarConfig, include_secrets: bool = False) -> dict[str, Any]:
    """Plain-dict view of the config, grouped by section."""
    data = asdict(config)
    if not include_secrets:
        for section, key in _SECRET_KEYS:
            data[section].pop(key, None)
    return data


def get_default_config_path() -> Path:
    """Return the default config file path."""
    return DEFAULT_CONFIG_PATH


def config_path_in_use(path: str | None = None) -> Path:
    """Return the config path load_config would read."""
    return _resolve_config_path(path)


# ──────────────────────────────────────────────────────────────
# Private helpers
# ──────────────────────────────────────────────────────────────


def _resolve_config_path(path: str | None) -> Path:
    if path:
        return Path(path).expanduser()
    env_path = os.environ.get("XBAR_CONFIG_PATH")
    if env_path:
        return Path(env_path).expanduser()
    return DEFAULT_CONFIG_PATH


def _dict_to_config(raw: dict) -> XbarConfig:
    """Build XbarConfig from raw TOML dict, applying defaults for missing keys."""
    config = XbarConfig()
    for section_field in fields(config):
        section_raw = raw.get(section_field.name, {})
        if not isinstance(section_raw, dict):
            raise ConfigInvalidError(f"[{section_field.name}] must be a table")
        section_obj = getattr(config, section_field.name)
        for f in fields(section_obj):
            if (section_field.name, f.name) in _SECRET_KEYS or f.name not in section_raw:
                continue
            current = getattr(section_obj, f.name)
            setattr(
                section_obj,
                f.name,
                _coerce(section_raw[f.name], type(current), f"{section_field.name}.{f.name}"),
            )
    return config


def _coerce(value: Any, target: type, key: str) -> Any:
    try:
        if target is bool:
            if isinstance(value, str):
                return value.lower() in ("1", "true", "yes")
            return bool(value)
        return target(value)
    except (ValueError, TypeError) as e:
        raise ConfigInvalidError(f"Invalid value for {key}={value!r}: {e}") from e


def _apply_env_overrides(config: XbarConfig) -> None:
    """Apply environment variable overrides to a loaded config."""
    if os.environ.get("XBAR_NO_COLOR"):
        config.output.color = False

    for env_var, dotted_key, converter in _ENV_OVERRIDES:
        val = os.environ.get(env_var)
        if val is None:
            continue
        section, key = dotted_key.split(".", 1)
        section_obj = getattr(config, section)
        try:
            setattr(section_obj, key, converter(val))
        except (ValueError, TypeError) as e:
            # Never echo the value back: it may be the API key.
            raise ConfigInvalidError(f"Invalid value for {env_var}: {e}") from e


def _validate_config(config: XbarConfig) -> None:
    """Validate config values. Raises ConfigInvalidError on invalid values."""
    if config.output.default_format not in VALID_FORMATS:
        raise ConfigInvalidError(
            f"output.default_format must be one of {sorted(VALID_FORMATS)}, "
            f"got {config.output.default_format!r}"
        )
    if config.paa.activation not in VALID_ACTIVATIONS:
        raise ConfigInvalidError(
            f"paa.activation must be one of {sorted(VALID_ACTIVATIONS)}, "
            f"got {config.paa.activation!r}"
        )
    if config.paa.fidelity not in VALID_FIDELITIES:
        raise ConfigInvalidError(
            f"paa.fidelity must be one of {sorted(VALID_FIDELITIES)}, got {config.paa.fidelity!r}"
        )
    if config.circuit.vdd <= 0:
        raise ConfigInvalidError(f"circuit.vdd must be positive, got {config.circuit.vdd}")
    if not 0 < config.circuit.tol < 1:
        raise ConfigInvalidError(f"circuit.tol must be in (0, 1), got {config.circuit.tol}")
    if config.llm.max_retries < 1:
        raise ConfigInvalidError(f"llm.max_retries must be >= 1, got {config.llm.max_retries}")
    if config.llm.max_in_flight < 1:
        raise ConfigInvalidError(
            f"llm.max_in_flight must be >= 1, got {config.llm.max_in_flight}"
        )
    if not config.llm.base_url.startswith(("http://", "https://")):
        raise ConfigInvalidError(
            f"llm.base_url must be an http(s) URL, got {config.llm.base_url!r}"
        )
    if config.sweep.parallel < 1:
        raise ConfigInvalidError(f"sweep.parallel must be >= 1, got {config.sweep.parallel}")
    if config.verify.max_rounds < 1:
        raise ConfigInvalidError(f"verify.max_rounds must be >= 1, got {config.verify.max_rounds}")
