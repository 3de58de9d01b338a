"""Tests for xbarcli/verify.py — lint, dynamic checks, fault injection, repair loop."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
import pytest

from tests.conftest import random_tile
from xbarcli.design_space import DeviceCatalog
from xbarcli.exceptions import ContractError, DesignError
from xbarcli.models import ConductanceTile, DesignPoint, Mode
from xbarcli.netlist import GeneratorOptions, Netlist, emit_spice, generate_crossbar_netlist
from xbarcli.verify import (
    DIAGNOSTIC_CATALOG,
    FIXABLE_CODES,
    CrossbarGenerator,
    Diagnostic,
    FaultKind,
    FaultSpec,
    apply_fixups,
    check_netlist,
    default_vectors,
    dynamic_check,
    fault_campaign,
    has_errors,
    inject_fault,
    ir_drop_envelope,
    static_check,
    verification_loop,
    verify_netlist_text,
)


def _codes(diags: Sequence[Diagnostic]) -> set[str]:
    return {d.code for d in diags if d.is_error}


@pytest.fixture
def clean(dp16: DesignPoint, tile16: ConductanceTile, catalog: DeviceCatalog) -> Netlist:
    return generate_crossbar_netlist(dp16, tile16, GeneratorOptions(catalog=catalog))


# ── Static checks ─────────────────────────────────────────────────────────────


def test_catalog_is_frozen_and_fixables_are_errors() -> None:
    assert FIXABLE_CODES <= set(DIAGNOSTIC_CATALOG)
    assert all(DIAGNOSTIC_CATALOG[c] == "error" for c in FIXABLE_CODES)
    assert DIAGNOSTIC_CATALOG["ANNOTATION_MISMATCH"] == "warning"


@pytest.mark.parametrize("bitcell", ["1T1R", "2T1R"])
@pytest.mark.parametrize("wire_r", [0.0, 2.5])
def test_generated_netlist_is_clean(
    catalog: DeviceCatalog, tile16: ConductanceTile, bitcell: str, wire_r: float
) -> None:
    dp = DesignPoint(7, "PCM", bitcell, 16, 16, Mode.analog())
    n = generate_crossbar_netlist(dp, tile16, GeneratorOptions(wire_r=wire_r, catalog=catalog))
    assert static_check(n, dp, catalog, tile16) == []
    assert check_netlist(n, dp, tile16, catalog=catalog) == []


def test_dropped_memory_cell_is_reported(
    clean: Netlist, dp16: DesignPoint, catalog: DeviceCatalog
) -> None:
    victim = "Rp_r3_c5"
    n = Netlist(clean.title, [e for e in clean.elements if e.name != victim], clean.annotations)
    diags = [d for d in static_check(n, dp16, catalog) if d.is_error]
    assert diags
    assert _codes(diags) & {"ELEMENT_COUNT_MISMATCH", "FLOATING_NODE", "MISSING_ELEMENT"}


def test_out_of_range_resistance(clean: Netlist, dp16: DesignPoint, catalog: DeviceCatalog) -> None:
    r_off = catalog.device("PCM").r_off
    elements = [
        e if e.name != "Rn_r2_c7" else type(e)(e.kind, e.name, e.nodes, 10 * r_off)
        for e in clean.elements
    ]
    n = Netlist(clean.title, elements, clean.annotations)
    hits = [d for d in static_check(n, dp16, catalog) if d.code == "CONDUCTANCE_OUT_OF_RANGE"]
    assert [d.element_or_node for d in hits] == ["Rn_r2_c7"]


def test_duplicate_name_located(clean: Netlist, dp16: DesignPoint, catalog: DeviceCatalog) -> None:
    faulty = inject_fault(clean, FaultSpec(FaultKind.DUPLICATE_NAME, 1), catalog)
    diags = static_check(faulty, dp16, catalog)
    assert "DUPLICATE_NAME" in _codes(diags)


def test_annotation_mismatch_is_only_a_warning(
    catalog: DeviceCatalog, tile16: ConductanceTile
) -> None:
    built = DesignPoint(7, "PCM", "1T1R", 16, 16, Mode.analog())
    checked = DesignPoint(7, "PCM", "1T1R", 16, 16, Mode.digital(4))
    n = generate_crossbar_netlist(built, tile16, GeneratorOptions(catalog=catalog))
    diags = static_check(n, checked, catalog)
    assert [d.code for d in diags] == ["ANNOTATION_MISMATCH"]
    assert not has_errors(diags)


def test_ground_detach_short_circuits(
    clean: Netlist, dp16: DesignPoint, catalog: DeviceCatalog
) -> None:
    faulty = inject_fault(clean, FaultSpec(FaultKind.GROUND_DETACH), catalog)
    assert _codes(static_check(faulty, dp16, catalog)) == {"GROUND_DETACHED"}


def test_every_error_names_something_in_the_netlist(
    clean: Netlist, dp16: DesignPoint, catalog: DeviceCatalog
) -> None:
    for kind in FaultKind:
        faulty = inject_fault(clean, FaultSpec(kind, 4), catalog)
        names = {e.name for e in faulty.elements} | faulty.nodes()
        for d in static_check(faulty, dp16, catalog):
            if d.is_error:
                assert d.element_or_node in names, (kind, d)


# ── Dynamic checks ────────────────────────────────────────────────────────────


def test_default_vectors() -> None:
    vs = default_vectors(8, 0.8, 3, seed=1)
    assert len(vs) == 4
    assert vs[0].tolist() == [0.8] * 8
    assert all(np.all((v >= 0) & (v <= 0.8)) for v in vs)
    assert np.array_equal(vs[2], default_vectors(8, 0.8, 3, seed=1)[2])


def test_ir_drop_envelope(tile16: ConductanceTile) -> None:
    assert np.all(ir_drop_envelope(tile16.g_pos, 1.0, 0.0) == 0)
    small = ir_drop_envelope(tile16.g_pos, 1.0, 1.0)
    assert np.all(small > 0)
    assert ir_drop_envelope(tile16.g_pos, 1.0, 2.0) == pytest.approx(2 * small)


def test_ideal_wires_match_mac(
    dp16: DesignPoint, tile16: ConductanceTile, catalog: DeviceCatalog
) -> None:
    n = generate_crossbar_netlist(dp16, tile16, GeneratorOptions(wire_r=0.0, catalog=catalog))
    assert dynamic_check(n, dp16, tile16, catalog=catalog) == []


def test_dynamic_rejects_wrong_vector_length(
    clean: Netlist, dp16: DesignPoint, tile16: ConductanceTile, catalog: DeviceCatalog
) -> None:
    with pytest.raises(ContractError):
        dynamic_check(clean, dp16, tile16, vectors=[np.ones(3)], catalog=catalog)


def test_polarity_mixup_flips_signs(
    dp16: DesignPoint, tile16: ConductanceTile, catalog: DeviceCatalog
) -> None:
    n = generate_crossbar_netlist(dp16, tile16, GeneratorOptions(wire_r=0.0, catalog=catalog))
    faulty = inject_fault(n, FaultSpec(FaultKind.POLARITY_MIXUP), catalog)
    diags = dynamic_check(faulty, dp16, tile16, catalog=catalog)
    assert "SIGN_MISMATCH" in _codes(diags)
    assert all("column" in d.details for d in diags if d.code == "SIGN_MISMATCH")


def test_short_between_columns_deviates(
    dp16: DesignPoint, tile16: ConductanceTile, catalog: DeviceCatalog
) -> None:
    n = generate_crossbar_netlist(dp16, tile16, GeneratorOptions(catalog=catalog))
    faulty = inject_fault(n, FaultSpec(FaultKind.SHORT_NODES, 2), catalog)
    diags = dynamic_check(faulty, dp16, tile16, catalog=catalog)
    assert _codes(diags) & {"CURRENT_DEVIATION", "CURRENT_EXCEEDS_IDEAL", "SIGN_MISMATCH"}


# ── Text entry point ──────────────────────────────────────────────────────────


def test_verify_text_reads_tile_back(
    clean: Netlist, dp16: DesignPoint, catalog: DeviceCatalog
) -> None:
    diags = verify_netlist_text(emit_spice(clean), dp16, dynamic=True, catalog=catalog)
    assert diags == []


def test_verify_text_parse_error_is_a_diagnostic(dp16: DesignPoint) -> None:
    diags = verify_netlist_text("* title\nQ1 a b 1\n.END\n", dp16)
    assert [d.code for d in diags] == ["PARSE_ERROR"]
    assert diags[0].location == 2
    assert diags[0].to_dict()["line"] == 2


def test_diagnostic_json_shape() -> None:
    d = Diagnostic("error", "FLOATING_NODE", "x", "node x floats", 4)
    assert d.to_dict() == {
        "code": "FLOATING_NODE",
        "severity": "error",
        "element": "x",
        "message": "node x floats",
        "line": 4,
    }


# ── Fault injection ───────────────────────────────────────────────────────────


def test_fault_spec_validation() -> None:
    assert FaultSpec("ground_detach").kind is FaultKind.GROUND_DETACH
    with pytest.raises(ContractError):
        FaultSpec(FaultKind.DROP_ELEMENT, -1)
    with pytest.raises(ValueError):
        FaultSpec("melt_wire")


@pytest.mark.parametrize("kind", list(FaultKind))
def test_injection_is_deterministic_and_pure(
    clean: Netlist, catalog: DeviceCatalog, kind: FaultKind
) -> None:
    before = emit_spice(clean)
    a = inject_fault(clean, FaultSpec(kind, 7), catalog)
    b = inject_fault(clean, FaultSpec(kind, 7), catalog)
    assert emit_spice(a) == emit_spice(b)
    assert emit_spice(a) != before
    assert emit_spice(clean) == before


def test_inapplicable_fault_names_precondition() -> None:
    empty = Netlist("empty", [], {})
    with pytest.raises(ContractError, match="drop_element not applicable"):
        inject_fault(empty, FaultSpec(FaultKind.DROP_ELEMENT))


def test_every_fault_kind_is_detected(
    dp16: DesignPoint, tile16: ConductanceTile, catalog: DeviceCatalog
) -> None:
    records = fault_campaign(
        dp16, tile16, seeds=range(5), opts=GeneratorOptions(catalog=catalog), max_workers=4
    )
    assert len(records) == len(FaultKind) * 5
    assert [(r.kind, r.seed) for r in records] == [(k, s) for k in FaultKind for s in range(5)]
    missed = [r.to_dict() for r in records if not r.detected]
    assert missed == []


# ── Repair loop ───────────────────────────────────────────────────────────────


def test_apply_fixups_restores_ground(
    clean: Netlist, dp16: DesignPoint, tile16: ConductanceTile, catalog: DeviceCatalog
) -> None:
    faulty = inject_fault(clean, FaultSpec(FaultKind.GROUND_DETACH), catalog)
    fixed = apply_fixups(faulty, static_check(faulty, dp16, catalog), dp16, catalog)
    assert fixed is not None
    assert static_check(fixed, dp16, catalog, tile16) == []


def test_apply_fixups_refuses_structural_faults(
    clean: Netlist, dp16: DesignPoint, catalog: DeviceCatalog
) -> None:
    faulty = inject_fault(clean, FaultSpec(FaultKind.FLOATING_NODE), catalog)
    assert apply_fixups(faulty, static_check(faulty, dp16, catalog), dp16, catalog) is None
    assert apply_fixups(clean, [], dp16, catalog) is None


def test_healthy_generator_passes_first_round(
    dp16: DesignPoint, tile16: ConductanceTile, catalog: DeviceCatalog
) -> None:
    outcome = verification_loop(dp16, tile16, catalog=catalog)
    assert outcome.accepted
    assert outcome.rounds == 1
    assert outcome.netlist is not None
    assert outcome.to_dict() == {"accepted": True, "rounds": 1, "history": [[]]}


def test_flaky_generator_is_repaired_in_round_two(
    dp16: DesignPoint, tile16: ConductanceTile, catalog: DeviceCatalog
) -> None:
    inner = CrossbarGenerator(GeneratorOptions(catalog=catalog))
    calls: list[int] = []

    def flaky(dp, tile, feedback, previous):
        calls.append(len(feedback))
        n = inner(dp, tile, feedback, previous)
        if len(calls) == 1:
            return inject_fault(n, FaultSpec(FaultKind.GROUND_DETACH), catalog)
        return n

    outcome = verification_loop(dp16, tile16, flaky, catalog=catalog)
    assert outcome.accepted
    assert outcome.rounds == 2
    assert calls == [0, 1]
    assert _codes(outcome.history[0]) == {"GROUND_DETACHED"}


def test_broken_generator_exhausts_rounds(
    dp16: DesignPoint, tile16: ConductanceTile, catalog: DeviceCatalog
) -> None:
    def broken(dp, tile, feedback, previous):
        n = generate_crossbar_netlist(dp, tile, GeneratorOptions(catalog=catalog))
        return inject_fault(n, FaultSpec(FaultKind.GROUND_DETACH), catalog)

    outcome = verification_loop(dp16, tile16, broken, max_rounds=3, catalog=catalog)
    assert not outcome.accepted
    assert outcome.netlist is None
    assert outcome.rounds == 3
    assert len(outcome.history) == 3
    assert outcome.history[0] == outcome.history[1] == outcome.history[2]


def test_generator_exception_is_recorded(dp16: DesignPoint, tile16: ConductanceTile) -> None:
    def raising(dp, tile, feedback, previous):
        raise DesignError("no such device")

    outcome = verification_loop(dp16, tile16, raising, max_rounds=2)
    assert not outcome.accepted
    assert [[d.code for d in r] for r in outcome.history] == [["GENERATION_FAILED"]] * 2


def test_max_rounds_must_be_positive(dp16: DesignPoint, tile16: ConductanceTile) -> None:
    with pytest.raises(ContractError):
        verification_loop(dp16, tile16, max_rounds=0)


@pytest.mark.slow
@pytest.mark.parametrize("size", [16, 32])
def test_detection_over_twenty_seeds(catalog: DeviceCatalog, size: int) -> None:
    dp = DesignPoint(7, "RRAM", "1T1R", size, size, Mode.analog())
    tile = random_tile(size, size, catalog.device("RRAM"), seed=size)
    records = fault_campaign(dp, tile, opts=GeneratorOptions(catalog=catalog))
    assert len(records) == 20 * len(FaultKind)
    assert [r.to_dict() for r in records if not r.detected] == []
