"""Pytest fixtures shared across all xbarcli tests."""

from __future__ import annotations

import numpy as np
import pytest

from xbarcli.config import OutputConfig, VerifyConfig, XbarConfig
from xbarcli.design_space import DeviceCatalog, load_catalog
from xbarcli.dse import Repository, seed_paper_table
from xbarcli.mnist import MnistDataset, synthetic_dataset
from xbarcli.models import ConductanceTile, DesignPoint, DeviceKind, Mode
from xbarcli.paa import map_weights_to_conductance
from xbarcli.weights import MlpWeights, synthetic_weights

# ── Config fixtures ───────────────────────────────────────────────────────────


@pytest.fixture
def sample_config() -> XbarConfig:
    """Default config with colour off."""
    return XbarConfig(output=OutputConfig(default_format="json", color=False))


@pytest.fixture
def verify_settings() -> VerifyConfig:
    return VerifyConfig()


@pytest.fixture(autouse=True)
def _isolated_env(
    monkeypatch: pytest.MonkeyPatch, tmp_path_factory: pytest.TempPathFactory
) -> None:
    """Keep tests away from the user's config file and API key."""
    home = tmp_path_factory.mktemp("home")
    monkeypatch.setenv("XBAR_CONFIG_PATH", str(home / "config.toml"))
    monkeypatch.delenv("XBAR_LLM_API_KEY", raising=False)
    for var in ("XBAR_SEED", "XBAR_PARALLEL", "XBAR_OUTPUT_FORMAT", "XBAR_DEVICES_PATH"):
        monkeypatch.delenv(var, raising=False)


# ── Catalog / design fixtures ─────────────────────────────────────────────────


@pytest.fixture
def catalog() -> DeviceCatalog:
    return load_catalog()


@pytest.fixture
def unit_catalog(catalog: DeviceCatalog) -> DeviceCatalog:
    """Catalog with a near-ideal device: 1 kΩ on, 1 TΩ off."""
    return catalog.with_device(DeviceKind("UNIT", 1000.0, 1e12))


@pytest.fixture
def dp16() -> DesignPoint:
    return DesignPoint(7, "PCM", "1T1R", 16, 16, Mode.analog())


@pytest.fixture
def dp16_2t() -> DesignPoint:
    return DesignPoint(9, "RRAM", "2T1R", 16, 16, Mode.digital(4))


def random_tile(
    rows: int, cols: int, device: DeviceKind, seed: int = 0, levels: int | None = None
) -> ConductanceTile:
    """Mapped tile of signed Gaussian weights; both polarities in use."""
    rng = np.random.default_rng(seed)
    return map_weights_to_conductance(rng.normal(size=(rows, cols)), device, levels)


@pytest.fixture
def tile16(catalog: DeviceCatalog) -> ConductanceTile:
    return random_tile(16, 16, catalog.device("PCM"), seed=3)


@pytest.fixture
def tile16_rram(catalog: DeviceCatalog) -> ConductanceTile:
    return random_tile(16, 16, catalog.device("RRAM"), seed=5, levels=16)


# ── Data fixtures ─────────────────────────────────────────────────────────────


@pytest.fixture
def weights() -> MlpWeights:
    return synthetic_weights(seed=42)


@pytest.fixture
def images() -> MnistDataset:
    return synthetic_dataset(20, seed=7)


@pytest.fixture(scope="session")
def paper_repo() -> Repository:
    return seed_paper_table()
