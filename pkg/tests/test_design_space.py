"""Tests for xbarcli/design_space.py — catalog, grid enumeration, design keys."""

from __future__ import annotations

import itertools
from pathlib import Path

import pytest

from xbarcli.design_space import (
    DeviceCatalog,
    GridSpec,
    default_partition,
    design_key,
    enumerate_grid,
    load_catalog,
    load_grid,
    parse_key,
)
from xbarcli.exceptions import ConfigInvalidError, DesignError, EmptyAxisError
from xbarcli.models import DesignPoint, Mode

# ── catalog ───────────────────────────────────────────────────────────────────


def test_bundled_catalog_has_default_axes(catalog: DeviceCatalog) -> None:
    assert set(catalog.devices) == {"MRAM", "RRAM", "PCM", "CBRAM"}
    assert set(catalog.bitcells) == {"1T1R", "2T1R"}
    assert sorted(catalog.techs) == [7, 9, 14, 20]


def test_device_conductance_window(catalog: DeviceCatalog) -> None:
    pcm = catalog.device("pcm")
    assert pcm.g_max == pytest.approx(1 / 20e3)
    assert pcm.g_min == pytest.approx(1 / 10e6)


def test_2t1r_area_factor_exceeds_1t1r(catalog: DeviceCatalog) -> None:
    assert catalog.bitcell("2T1R").cell_area_factor > catalog.bitcell("1T1R").cell_area_factor
    assert catalog.bitcell("TwoT1R").switches == 2


def test_wire_r_grows_as_node_shrinks(catalog: DeviceCatalog) -> None:
    resistances = [catalog.tech(nm).wire_r for nm in (20, 14, 9, 7)]
    assert resistances == sorted(resistances)
    assert all(r > 0 for r in resistances)


def test_unknown_device_raises(catalog: DeviceCatalog) -> None:
    with pytest.raises(DesignError, match="unknown device"):
        catalog.device("FERAM")


def test_catalog_rejects_inverted_bitcell_areas(tmp_path: Path) -> None:
    p = tmp_path / "devices.toml"
    p.write_text(
        "[devices.X]\nr_on = 1.0\nr_off = 2.0\n"
        '[bitcells."1T1R"]\naccess_resistance = 1.0\ncell_area_factor = 2.0\n'
        '[bitcells."2T1R"]\naccess_resistance = 1.0\ncell_area_factor = 1.0\n'
        '[tech."7"]\nwire_r = 1.0\n'
    )
    with pytest.raises(ConfigInvalidError, match="2T1R"):
        load_catalog(p)


def test_catalog_missing_file(tmp_path: Path) -> None:
    with pytest.raises(ConfigInvalidError, match="not found"):
        load_catalog(tmp_path / "nope.toml")


# ── enumerate_grid ────────────────────────────────────────────────────────────


def test_default_grid_cardinality(catalog: DeviceCatalog) -> None:
    grid = load_grid()
    points = enumerate_grid(grid, catalog)
    assert len(points) == grid.cardinality() == 4 * 4 * 2 * 3 * 7


def test_648_point_digital_selection(catalog: DeviceCatalog) -> None:
    grid = GridSpec(
        techs=[7, 14, 20],
        bitcells=["1T1R"],
        modes=[Mode.digital(b) for b in (1, 2, 3, 4, 6, 8)],
        partitions=[(1, 1), (2, 2), (4, 4)],
    )
    assert len(enumerate_grid(grid, catalog)) == 648


def test_singleton_grid() -> None:
    grid = GridSpec([7], ["PCM"], ["1T1R"], [64], [Mode.analog()])
    points = enumerate_grid(grid)
    assert points == [DesignPoint(7, "PCM", "1T1R", 64, 64, Mode.analog())]


def test_small_grid_matches_nested_loops() -> None:
    grid = GridSpec([7, 9], ["PCM"], ["1T1R"], [16, 32], [Mode.analog()])
    expected = sorted(
        (
            DesignPoint(t, "PCM", "1T1R", s, s, Mode.analog())
            for t, s in itertools.product([7, 9], [16, 32])
        ),
        key=design_key,
    )
    assert enumerate_grid(grid) == expected


def test_enumeration_sorted_and_unique(catalog: DeviceCatalog) -> None:
    keys = [design_key(dp) for dp in enumerate_grid(load_grid(), catalog)]
    assert keys == sorted(keys)
    assert len(set(keys)) == len(keys)


def test_empty_axis_named() -> None:
    grid = GridSpec(devices=[])
    with pytest.raises(EmptyAxisError) as exc:
        enumerate_grid(grid)
    assert "devices" in exc.value.message


def test_unregistered_value_rejected(catalog: DeviceCatalog) -> None:
    with pytest.raises(DesignError):
        enumerate_grid(GridSpec(techs=[5]), catalog)


def test_indivisible_partition_rejected() -> None:
    with pytest.raises(DesignError, match="divisible"):
        enumerate_grid(GridSpec(sizes=[16], partitions=[(3, 1)]))


def test_grid_file_round_trip(tmp_path: Path) -> None:
    p = tmp_path / "grid.toml"
    p.write_text(
        'techs = [7]\ndevices = ["pcm"]\nbitcells = ["1t1r"]\nsizes = [16, 32]\n'
        "bits = [4]\nanalog = true\npartitions = [[1, 1]]\n"
    )
    grid = load_grid(p)
    assert grid.devices == ["PCM"]
    assert grid.modes == [Mode.digital(4), Mode.analog()]
    assert grid.cardinality() == 4


def test_default_partition() -> None:
    assert default_partition(64, 64, 64, 64) == (1, 1)
    assert default_partition(64, 64, 16, 32) == (4, 2)


# ── design_key ────────────────────────────────────────────────────────────────


def test_design_key_format() -> None:
    dp = DesignPoint(7, "PCM", "1T1R", 64, 64, Mode.analog(), (1, 1))
    assert design_key(dp) == "t7_pcm_1t1r_64x64_analog_p1x1"


def test_design_key_digital_and_unspecified_bits() -> None:
    assert design_key(DesignPoint(9, "RRAM", "2T1R", 16, 16, Mode.digital(4))).endswith(
        "_16x16_d4_p1x1"
    )
    assert "_dx_" in design_key(DesignPoint(9, "RRAM", "2T1R", 16, 16, Mode.digital(None)))


def test_design_key_round_trip_over_default_grid(catalog: DeviceCatalog) -> None:
    for dp in enumerate_grid(load_grid(), catalog):
        key = design_key(dp)
        assert " " not in key and "/" not in key
        assert parse_key(key) == dp


def test_parse_key_rejects_garbage() -> None:
    with pytest.raises(DesignError, match="malformed"):
        parse_key("7nm-pcm")


def test_design_point_invariants() -> None:
    with pytest.raises(DesignError):
        DesignPoint(7, "PCM", "1T1R", 0, 16, Mode.analog())
    with pytest.raises(DesignError):
        Mode("analog", 4)
    assert DesignPoint(7, "pcm", "1t-1r", 16, 16, Mode.analog()).bitcell == "1T1R"
