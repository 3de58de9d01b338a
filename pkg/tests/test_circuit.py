"""Tests for xbarcli/circuit.py — nodal solver, closed forms, power."""

from __future__ import annotations

import numpy as np
import pytest

from tests.conftest import random_tile
from xbarcli.circuit import (
    NodalSolver,
    SolveReport,
    average_power,
    build_system,
    dac_quantize,
    ideal_mac,
    ideal_power,
    kcl_residuals,
    pattern_to_sources,
    solve,
)
from xbarcli.design_space import DeviceCatalog
from xbarcli.exceptions import ContractError, IslandError, RangeError, SourceBindingError
from xbarcli.models import ConductanceTile, DesignPoint, Mode
from xbarcli.netlist import GeneratorOptions, generate_crossbar_netlist, parse_spice


@pytest.fixture
def one_cell_netlist(unit_catalog: DeviceCatalog):
    dp = DesignPoint(7, "UNIT", "1T1R", 1, 1, Mode.analog())
    tile = ConductanceTile(np.array([[1e-3]]), np.array([[1e-12]]))
    return generate_crossbar_netlist(dp, tile, GeneratorOptions(wire_r=0.0, catalog=unit_catalog))


# ── Closed forms ──────────────────────────────────────────────────────────────


def test_ideal_mac_differential() -> None:
    tile = ConductanceTile(np.array([[2e-4, 1e-4]]), np.array([[1e-4, 3e-4]]))
    assert ideal_mac([0.5], tile) == pytest.approx([5e-5, -1e-4])


def test_ideal_mac_length_mismatch(tile16: ConductanceTile) -> None:
    with pytest.raises(ContractError):
        ideal_mac(np.ones(3), tile16)


def test_ideal_power_sums_both_arrays() -> None:
    tile = ConductanceTile(np.array([[1e-3]]), np.array([[1e-3]]))
    assert ideal_power([1.0], tile) == pytest.approx(2e-3)


def test_dac_quantize_error_bound() -> None:
    rng = np.random.default_rng(0)
    x = rng.uniform(0.0, 1.0, size=2000)
    for bits in (1, 2, 4, 8):
        q = dac_quantize(x, bits, vdd=1.0)
        bound = 1.0 / (2 * ((1 << bits) - 1)) + 1e-12
        assert np.max(np.abs(q - x)) <= bound
        assert len(np.unique(q)) <= 1 << bits


def test_dac_quantize_analog_is_scaling() -> None:
    assert dac_quantize(0.25, None, vdd=0.8) == pytest.approx(0.2)


def test_dac_quantize_endpoints_exact() -> None:
    assert dac_quantize(0.0, 4) == 0.0
    assert dac_quantize(1.0, 4, vdd=1.2) == pytest.approx(1.2)


@pytest.mark.parametrize("x", [-0.01, 1.01, float("nan")])
def test_dac_quantize_out_of_range(x: float) -> None:
    with pytest.raises(RangeError):
        dac_quantize(x, 4)


def test_dac_quantize_rejects_zero_bits() -> None:
    with pytest.raises(RangeError):
        dac_quantize(0.5, 0)


# ── Nodal analysis ────────────────────────────────────────────────────────────


def test_one_cell_column_current_is_one_milliamp(one_cell_netlist) -> None:
    report = solve(build_system(one_cell_netlist))
    assert report.column_currents.shape == (1,)
    assert report.column_currents[0] == pytest.approx(1e-3, rel=1e-6)
    assert report.method == "direct"


def test_one_cell_power_is_one_milliwatt(one_cell_netlist) -> None:
    assert average_power(one_cell_netlist, [[1.0]]) == pytest.approx(1e-3, rel=1e-6)


def test_voltage_divider() -> None:
    n = parse_spice("V1 a 0 DC 1\nR1 a b 1k\nR2 b 0 1k\n")
    report = solve(build_system(n))
    assert report.node_voltages["b"] == pytest.approx(0.5)
    assert report.source_currents["V1"] == pytest.approx(5e-4)
    assert report.power == pytest.approx(5e-4)


def test_floating_island_named() -> None:
    n = parse_spice("V1 a 0 DC 1\nR1 a 0 1k\nR2 x y 1k\n")
    with pytest.raises(IslandError) as exc:
        build_system(n)
    assert exc.value.nodes == ["x", "y"]


def test_source_must_reference_ground() -> None:
    with pytest.raises(SourceBindingError):
        build_system(parse_spice("V1 a b DC 1\nR1 a b 1k\nR2 b 0 1k\n"))


def test_conflicting_sources_on_one_node() -> None:
    with pytest.raises(SourceBindingError):
        build_system(parse_spice("V1 a 0 DC 1\nV2 a 0 DC 2\nR1 a 0 1k\n"))


def test_zero_wire_r_matches_ideal_mac(
    catalog: DeviceCatalog, dp16: DesignPoint, tile16: ConductanceTile
) -> None:
    n = generate_crossbar_netlist(dp16, tile16, GeneratorOptions(wire_r=0.0, catalog=catalog))
    report = solve(build_system(n))
    expected = ideal_mac(np.ones(16), tile16)
    assert report.column_currents == pytest.approx(expected, rel=1e-8, abs=1e-15)
    assert report.power == pytest.approx(ideal_power(np.ones(16), tile16), rel=1e-8)


def test_wire_resistance_only_loses_current(
    catalog: DeviceCatalog, dp16: DesignPoint, tile16: ConductanceTile
) -> None:
    n = generate_crossbar_netlist(dp16, tile16, GeneratorOptions(wire_r=5.0, catalog=catalog))
    report = solve(build_system(n))
    ideal_p = np.ones(16) @ tile16.g_pos
    ideal_n = np.ones(16) @ tile16.g_neg
    assert np.all(report.polarity_currents["p"] <= ideal_p * (1 + 1e-9))
    assert np.all(report.polarity_currents["n"] <= ideal_n * (1 + 1e-9))
    assert report.power < ideal_power(np.ones(16), tile16)


def test_pcg_agrees_with_direct(
    catalog: DeviceCatalog, dp16: DesignPoint, tile16: ConductanceTile
) -> None:
    n = generate_crossbar_netlist(dp16, tile16, GeneratorOptions(catalog=catalog))
    system = build_system(n)
    direct = solve(system)
    iterative = solve(system, max_iter=5000, direct_threshold=0)
    assert iterative.method == "pcg"
    assert iterative.residual_norm <= 1e-10
    assert iterative.column_currents == pytest.approx(direct.column_currents, rel=1e-6)


def test_solver_reuse_is_linear_in_sources(
    catalog: DeviceCatalog, dp16: DesignPoint, tile16: ConductanceTile
) -> None:
    n = generate_crossbar_netlist(dp16, tile16, GeneratorOptions(catalog=catalog))
    solver = NodalSolver(build_system(n))
    full = solver.solve(pattern_to_sources(n, np.ones(16)))
    half = solver.solve(pattern_to_sources(n, np.full(16, 0.5)))
    assert half.column_currents == pytest.approx(full.column_currents / 2, rel=1e-8)
    assert half.power == pytest.approx(full.power / 4, rel=1e-8)


def test_kcl_holds_at_every_node(
    catalog: DeviceCatalog, dp16_2t: DesignPoint, tile16_rram: ConductanceTile
) -> None:
    n = generate_crossbar_netlist(dp16_2t, tile16_rram, GeneratorOptions(catalog=catalog))
    system = build_system(n)
    residuals = kcl_residuals(system, solve(system))
    assert len(residuals) == system.dimension
    assert max(residuals.values()) <= 1e-6


@pytest.mark.parametrize("size", [16, 32, 64])
def test_zero_wire_r_matches_ideal_mac_random_tiles(catalog: DeviceCatalog, size: int) -> None:
    dp = DesignPoint(7, "PCM", "1T1R", size, size, Mode.analog())
    rng = np.random.default_rng(size)
    for seed in range(50):
        tile = random_tile(size, size, catalog.device("PCM"), seed=seed)
        n = generate_crossbar_netlist(dp, tile, GeneratorOptions(wire_r=0.0, catalog=catalog))
        pattern = rng.uniform(0.0, 1.0, size=size)
        report = NodalSolver(build_system(n)).solve(pattern_to_sources(n, pattern))
        expected = ideal_mac(pattern, tile)
        scale = np.max(np.abs(expected))
        assert np.max(np.abs(report.column_currents - expected)) <= 1e-9 * scale, seed


@pytest.mark.slow
def test_kcl_holds_on_64x64_with_wire_resistance(catalog: DeviceCatalog) -> None:
    dp = DesignPoint(7, "PCM", "1T1R", 64, 64, Mode.analog())
    tile = random_tile(64, 64, catalog.device("PCM"), seed=11)
    n = generate_crossbar_netlist(dp, tile, GeneratorOptions(wire_r=2.5, catalog=catalog))
    system = build_system(n)
    report = solve(system, tol=1e-11, max_iter=50_000, direct_threshold=0)
    assert report.method == "pcg"
    residuals = kcl_residuals(system, report)
    assert len(residuals) == system.dimension
    assert max(residuals.values()) <= 1e-9


# ── Power ─────────────────────────────────────────────────────────────────────


def test_average_power_needs_patterns(one_cell_netlist) -> None:
    with pytest.raises(ContractError):
        average_power(one_cell_netlist, [])


def test_average_power_is_mean_over_patterns(one_cell_netlist) -> None:
    # P = V^2 G, so patterns 1 V and 0 V average to half a milliwatt
    assert average_power(one_cell_netlist, [[1.0], [0.0]]) == pytest.approx(5e-4, rel=1e-6)


def _report_with_power(*powers: float) -> SolveReport:
    return SolveReport(
        node_voltages={},
        column_currents=np.zeros(0),
        residual_norm=0.0,
        iterations=1,
        method="direct",
        source_power={f"V{k}": p for k, p in enumerate(powers)},
    )


def test_average_power_negative_mean_is_rejected(
    one_cell_netlist, monkeypatch: pytest.MonkeyPatch
) -> None:
    monkeypatch.setattr(NodalSolver, "solve", lambda self, sources=None: _report_with_power(-1e-3))
    with pytest.raises(ContractError, match="negative") as exc:
        average_power(one_cell_netlist, [[1.0]])
    assert exc.value.details == {"power": -1e-3}


def test_average_power_rounding_below_zero_reads_as_zero(
    one_cell_netlist, monkeypatch: pytest.MonkeyPatch
) -> None:
    report = _report_with_power(1e-3, -1e-3 - 1e-18)
    monkeypatch.setattr(NodalSolver, "solve", lambda self, sources=None: report)
    assert average_power(one_cell_netlist, [[1.0]]) == 0.0


def test_pattern_to_sources_per_row(one_cell_netlist) -> None:
    assert pattern_to_sources(one_cell_netlist, [0.3]) == {"Vp_row0": 0.3, "Vn_row0": 0.3}
    with pytest.raises(ContractError):
        pattern_to_sources(one_cell_netlist, [0.3, 0.4])


def test_pattern_to_sources_generic_netlist() -> None:
    n = parse_spice("VA a 0 DC 1\nVB b 0 DC 1\nR1 a b 1k\n")
    assert pattern_to_sources(n, [0.1, 0.2]) == {"VA": 0.1, "VB": 0.2}
