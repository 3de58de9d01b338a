"""Netlist verification: static lint, dynamic simulation checks, fault
injection and the bounded generate → check → repair loop.

Diagnostic codes (frozen; severity in parentheses)::

    PARSE_ERROR               (error)    card could not be parsed
    DUPLICATE_NAME            (error)    two elements share a name
    GROUND_DETACHED           (error)    no element references ground
    FLOATING_NODE             (error)    DC island with no path to ground
    ELEMENT_COUNT_MISMATCH    (error)    total count differs from the closed form
    MISSING_ELEMENT           (error)    expected element absent (count intact)
    UNEXPECTED_ELEMENT        (error)    element outside the crossbar skeleton
    TOPOLOGY_MISMATCH         (error)    element connects the wrong nodes
    POLARITY_MISSING          (error)    a whole polarity array is absent
    ROW_UNDRIVEN              (error)    a row tap has no wire path to its source
    COLUMN_UNSENSED           (error)    a column has no path into its sense node
    CONDUCTANCE_OUT_OF_RANGE  (error)    cell conductance outside [1/r_off, 1/r_on]
    CONDUCTANCE_MISMATCH      (error)    cells differ from the mapped tile
    ANNOTATION_MISMATCH       (warning)  design_key annotation names another design
    GENERATION_FAILED         (error)    generator raised instead of emitting
    SOLVE_FAILED              (error)    nodal solve impossible
    CURRENT_DEVIATION         (error)    |I - I_ideal| beyond the IR-drop envelope
    CURRENT_EXCEEDS_IDEAL     (error)    polarity current above ideal plus envelope
    SIGN_MISMATCH             (error)    differential current has the wrong sign
    KCL_VIOLATION             (error)    node current imbalance above kcl_tol

Dynamic bound. With node voltages confined to [0, V_max], every cell
current is at most G_ij * V_max, so row i carries at most
D_i = V_max * sum_j G_ij and column j at most C_j = V_max * sum_i G_ij. The
tap of column j sits behind j + 1 row segments and the bit line has
wire_r * rows, hence per polarity

    |I_j - I_ideal_j| <= E_j = sum_i G_ij * (wire_r (j + 1) D_i + wire_r rows C_j)

Columns are accepted when the differential deviation stays below
envelope_slack * (E_p + E_n) + deviation_floor * sum_i V_i (G+_ij + G-_ij).
With wire_r = 0 only the floor remains.
"""

from __future__ import annotations

import logging
import re
from collections import Counter
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from xbarcli.circuit import (
    DEFAULT_TOL,
    MIN_RESISTANCE,
    NodalSolver,
    build_system,
    kcl_residuals,
    pattern_to_sources,
)
from xbarcli.config import VerifyConfig
from xbarcli.design_space import DeviceCatalog, design_key, load_catalog
from xbarcli.exceptions import ContractError, DesignError, SpiceSyntaxError, XbarError
from xbarcli.models import ConductanceTile, DesignPoint
from xbarcli.netlist import (
    GROUND,
    POLARITIES,
    RANGE_RTOL,
    Element,
    GeneratorOptions,
    Netlist,
    SkeletonSlot,
    col_node,
    crossbar_skeleton,
    generate_crossbar_netlist,
    memory_name,
    parse_spice,
    row_node,
    source_name,
    switch_names,
)

logger = logging.getLogger(__name__)

ERROR = "error"
WARNING = "warning"

DIAGNOSTIC_CATALOG: dict[str, str] = {
    "PARSE_ERROR": ERROR,
    "DUPLICATE_NAME": ERROR,
    "GROUND_DETACHED": ERROR,
    "FLOATING_NODE": ERROR,
    "ELEMENT_COUNT_MISMATCH": ERROR,
    "MISSING_ELEMENT": ERROR,
    "UNEXPECTED_ELEMENT": ERROR,
    "TOPOLOGY_MISMATCH": ERROR,
    "POLARITY_MISSING": ERROR,
    "ROW_UNDRIVEN": ERROR,
    "COLUMN_UNSENSED": ERROR,
    "CONDUCTANCE_OUT_OF_RANGE": ERROR,
    "CONDUCTANCE_MISMATCH": ERROR,
    "ANNOTATION_MISMATCH": WARNING,
    "GENERATION_FAILED": ERROR,
    "SOLVE_FAILED": ERROR,
    "CURRENT_DEVIATION": ERROR,
    "CURRENT_EXCEEDS_IDEAL": ERROR,
    "SIGN_MISMATCH": ERROR,
    "KCL_VIOLATION": ERROR,
}

# Codes apply_fixups can repair without regenerating.
FIXABLE_CODES = frozenset({"DUPLICATE_NAME", "GROUND_DETACHED", "MISSING_ELEMENT"})

DETACHED_GROUND = "0_detached"
SHORT_RESISTANCE = 1e-3

_MEMORY_RE = re.compile(r"^R(?P<p>[pn])_r(?P<i>\d+)_c(?P<j>\d+)$")
_COL_NODE_RE = re.compile(r"^(?P<p>[pn])_col(?P<j>\d+)$")


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    code: str
    element_or_node: str
    message: str
    location: int | None = None
    details: dict[str, Any] = field(default_factory=dict, compare=False, hash=False)

    @property
    def is_error(self) -> bool:
        return self.severity == ERROR

    def to_dict(self) -> dict[str, Any]:
        return {
            "code": self.code,
            "severity": self.severity,
            "element": self.element_or_node,
            "message": self.message,
            "line": self.location,
        }


def has_errors(diags: Iterable[Diagnostic]) -> bool:
    return any(d.is_error for d in diags)


def _diag(
    code: str, target: str, message: str, n: Netlist | None = None, **details: Any
) -> Diagnostic:
    location = n.lines.get(target) if n is not None else None
    return Diagnostic(DIAGNOSTIC_CATALOG[code], code, target, message, location, details)


# ── Static checks ─────────────────────────────────────────────────────────────


@dataclass
class _Shape:
    rows: int
    cols: int
    switches: int
    with_wires: bool


def _annotated_float(n: Netlist, key: str, default: float) -> float:
    try:
        return float(n.annotations[key])
    except (KeyError, ValueError):
        return default


def _shape(n: Netlist, dp: DesignPoint, catalog: DeviceCatalog) -> _Shape:
    try:
        rows = int(n.annotations.get("rows", dp.rows))
        cols = int(n.annotations.get("cols", dp.cols))
    except ValueError:
        rows, cols = dp.rows, dp.cols
    if "wire_r" in n.annotations:
        with_wires = _annotated_float(n, "wire_r", 0.0) > 0
    else:
        with_wires = any(e.name.startswith(("RW", "RC")) for e in n.elements)
    return _Shape(rows, cols, catalog.bitcell(dp.bitcell).switches, with_wires)


def _first_elements(n: Netlist) -> dict[str, Element]:
    first: dict[str, Element] = {}
    for e in n.elements:
        first.setdefault(e.name, e)
    return first


def static_check(
    n: Netlist,
    dp: DesignPoint,
    catalog: DeviceCatalog | None = None,
    tile: ConductanceTile | None = None,
) -> list[Diagnostic]:
    """
    Lint a netlist against the crossbar skeleton for dp.

    An empty list means every check passed. With tile, programmed cell
    conductances are also compared against the mapped values.
    """
    catalog = catalog or load_catalog()
    diags: list[Diagnostic] = []

    for name, count in Counter(e.name for e in n.elements).items():
        if count > 1:
            diags.append(
                _diag(
                    "DUPLICATE_NAME",
                    name,
                    f"element name {name} used {count} times",
                    n,
                    count=count,
                )
            )

    key = n.annotations.get("design_key")
    if key and key != design_key(dp) and n.elements:
        diags.append(
            _diag(
                "ANNOTATION_MISMATCH",
                n.elements[0].name,
                f"netlist annotated {key}, checking against {design_key(dp)}",
                n,
            )
        )

    nodes = n.nodes()
    if n.ground_node not in nodes:
        target = _detached_ground(n)
        diags.append(
            _diag(
                "GROUND_DETACHED",
                target,
                f"no element references ground {n.ground_node!r}; sources reference {target!r}",
                n,
            )
        )
        return diags

    diags.extend(_floating(n, nodes))
    shape = _shape(n, dp, catalog)
    skeleton = crossbar_skeleton(shape.rows, shape.cols, shape.switches, shape.with_wires)
    first = _first_elements(n)
    diags.extend(_structure(n, skeleton, first, nodes, shape))
    missing_polarity = _polarities(n, first, shape)
    diags.extend(missing_polarity.values())
    diags.extend(_rows(n, skeleton, first, nodes, shape, set(missing_polarity)))
    diags.extend(_columns(n, first, nodes, shape, set(missing_polarity)))
    diags.extend(_conductances(n, dp, catalog, first, shape, tile))
    return diags


def _detached_ground(n: Netlist) -> str:
    refs = Counter(e.nodes[1] for e in n.elements if e.kind == "V")
    if refs:
        return refs.most_common(1)[0][0]
    return n.elements[0].name if n.elements else n.ground_node


def _floating(n: Netlist, nodes: set[str]) -> list[Diagnostic]:
    names = sorted(nodes)
    index = {name: k for k, name in enumerate(names)}
    a = np.array([index[e.terminals[0]] for e in n.elements], dtype=int)
    b = np.array([index[e.terminals[1]] for e in n.elements], dtype=int)
    graph = sp.coo_matrix((np.ones(a.size), (a, b)), shape=(len(names), len(names)))
    _, labels = connected_components(graph, directed=False)
    anchored = labels[index[n.ground_node]]
    islands: dict[int, list[str]] = {}
    for name, label in zip(names, labels, strict=True):
        if label != anchored:
            islands.setdefault(int(label), []).append(name)
    return [
        _diag(
            "FLOATING_NODE",
            members[0],
            f"{len(members)} node(s) without a DC path to ground, starting at {members[0]}",
            n,
            nodes=members[:10],
        )
        for members in sorted(islands.values())
    ]


def _present_node(slot: SkeletonSlot, nodes: set[str]) -> str | None:
    dc = slot.nodes[1:] if slot.kind == "S" else slot.nodes
    return next((x for x in dc if x in nodes and x != GROUND), None)


def _region(slot: SkeletonSlot) -> str:
    parts = [f"polarity {slot.polarity}"]
    if slot.row >= 0:
        parts.append(f"row {slot.row}")
    if slot.col >= 0:
        parts.append(f"col {slot.col}")
    return ", ".join(parts)


def _structure(
    n: Netlist,
    skeleton: list[SkeletonSlot],
    first: dict[str, Element],
    nodes: set[str],
    shape: _Shape,
) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    expected = {s.name: s for s in skeleton}
    missing = [s for s in skeleton if s.name not in first]
    unexpected = [name for name in first if name not in expected]

    if len(n.elements) != len(skeleton):
        if missing:
            target = _present_node(missing[0], nodes) or (unexpected[0] if unexpected else "")
            region = _region(missing[0])
        else:
            target = unexpected[0] if unexpected else n.elements[-1].name
            region = "extra elements"
        if not target:
            target = n.elements[0].name
        diags.append(
            _diag(
                "ELEMENT_COUNT_MISMATCH",
                target,
                f"{len(n.elements)} elements, expected {len(skeleton)} for "
                f"{shape.rows}x{shape.cols} ({region})",
                n,
                missing=[s.name for s in missing[:10]],
                unexpected=unexpected[:10],
            )
        )
    else:
        for slot in missing:
            target = _present_node(slot, nodes) or n.elements[0].name
            diags.append(
                _diag(
                    "MISSING_ELEMENT",
                    target,
                    f"{slot.name} absent ({_region(slot)})",
                    n,
                    name=slot.name,
                )
            )
        for name in unexpected:
            message = f"{name} is not part of the crossbar"
            diags.append(_diag("UNEXPECTED_ELEMENT", name, message, n))

    for name, e in first.items():
        slot = expected.get(name)
        if slot is None or slot.role in ("source", "col_wire"):
            continue
        if e.kind != slot.kind or e.nodes != slot.nodes:
            diags.append(
                _diag(
                    "TOPOLOGY_MISMATCH",
                    name,
                    f"{name} connects {' '.join(e.nodes)}, expected {' '.join(slot.nodes)}",
                    n,
                )
            )
    return diags


def _polarities(n: Netlist, first: dict[str, Element], shape: _Shape) -> dict[str, Diagnostic]:
    present = {p: False for p in POLARITIES}
    for name in first:
        m = _MEMORY_RE.match(name)
        if m:
            present[m["p"]] = True
    out = {}
    for p, ok in present.items():
        if not ok and n.elements:
            out[p] = _diag(
                "POLARITY_MISSING",
                n.elements[0].name,
                f"no memory cells for polarity {p!r}; differential pair incomplete",
                n,
                polarity=p,
            )
    return out


def _rows(
    n: Netlist,
    skeleton: list[SkeletonSlot],
    first: dict[str, Element],
    nodes: set[str],
    shape: _Shape,
    skip: set[str],
) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    wires: dict[tuple[str, int], list[str]] = {}
    taps: dict[tuple[str, int], list[str]] = {}
    for slot in skeleton:
        if slot.role == "row_wire":
            wires.setdefault((slot.polarity, slot.row), []).append(slot.name)
        elif slot.role == "switch":
            taps.setdefault((slot.polarity, slot.row), []).append(slot.nodes[1])

    for p in POLARITIES:
        if p in skip:
            continue
        for i in range(shape.rows):
            start = row_node(p, i, 0)
            src = first.get(source_name(p, i))
            if src is None or src.kind != "V" or src.nodes != (start, GROUND):
                target = start if start in nodes else (src.name if src else n.elements[0].name)
                bound = f"bound to {' '.join(src.nodes)}" if src else "missing"
                diags.append(
                    _diag(
                        "ROW_UNDRIVEN",
                        target,
                        f"row {i} ({p}) source {source_name(p, i)} {bound}",
                        n,
                        row=i,
                        polarity=p,
                    )
                )
                continue
            adjacency: dict[str, set[str]] = {}
            for name in wires.get((p, i), []):
                e = first.get(name)
                if e is None:
                    continue
                x, y = e.terminals
                adjacency.setdefault(x, set()).add(y)
                adjacency.setdefault(y, set()).add(x)
            seen = {start}
            stack = [start]
            while stack:
                for nxt in adjacency.get(stack.pop(), ()):
                    if nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
            cut = next((t for t in taps.get((p, i), []) if t in nodes and t not in seen), None)
            if cut is not None:
                diags.append(
                    _diag(
                        "ROW_UNDRIVEN",
                        cut,
                        f"row {i} ({p}) tap {cut} has no wire path to its source",
                        n,
                        row=i,
                        polarity=p,
                    )
                )
    return diags


def _columns(
    n: Netlist, first: dict[str, Element], nodes: set[str], shape: _Shape, skip: set[str]
) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    for p in POLARITIES:
        if p in skip:
            continue
        for j in range(shape.cols):
            if shape.with_wires:
                sense = first.get(f"RC{p}_c{j}")
                if sense is not None and sense.nodes == (col_node(p, j), GROUND):
                    continue
                node = col_node(p, j)
                target = node if node in nodes else (sense.name if sense else n.elements[0].name)
            else:
                cells = [first.get(memory_name(p, i, j)) for i in range(shape.rows)]
                present = [e for e in cells if e is not None]
                if any(GROUND in e.terminals for e in present):
                    continue
                target = present[0].name if present else n.elements[0].name
            diags.append(
                _diag(
                    "COLUMN_UNSENSED",
                    target,
                    f"column {j} ({p}) has no path into its sense node",
                    n,
                    column=j,
                    polarity=p,
                )
            )
    return diags


def cell_conductances(
    n: Netlist, rows: int, cols: int, switches: int
) -> dict[tuple[str, int, int], float]:
    """Series conductance (memory + access switches) of every complete cell."""
    first = _first_elements(n)
    out: dict[tuple[str, int, int], float] = {}
    for p in POLARITIES:
        for i in range(rows):
            for j in range(cols):
                mem = first.get(memory_name(p, i, j))
                if mem is None:
                    continue
                sw = [first.get(s) for s in switch_names(p, i, j, switches)]
                present = [e for e in sw if e is not None]
                if not present:
                    continue
                r_access = 1.0 / sum(1.0 / max(e.value, MIN_RESISTANCE) for e in present)
                total = mem.value + r_access
                out[(p, i, j)] = 1.0 / total if total > 0 else float("inf")
    return out


def tile_from_netlist(
    n: Netlist, dp: DesignPoint, catalog: DeviceCatalog | None = None
) -> ConductanceTile:
    """Recover the programmed conductance pair; missing cells read as 0."""
    catalog = catalog or load_catalog()
    shape = _shape(n, dp, catalog)
    g = {p: np.zeros((shape.rows, shape.cols)) for p in POLARITIES}
    for (p, i, j), value in cell_conductances(n, shape.rows, shape.cols, shape.switches).items():
        g[p][i, j] = value
    return ConductanceTile(g["p"], g["n"])


def _conductances(
    n: Netlist,
    dp: DesignPoint,
    catalog: DeviceCatalog,
    first: dict[str, Element],
    shape: _Shape,
    tile: ConductanceTile | None,
) -> list[Diagnostic]:
    device = catalog.device(dp.device)
    lo, hi = device.g_min * (1 - RANGE_RTOL), device.g_max * (1 + RANGE_RTOL)
    cells = cell_conductances(n, shape.rows, shape.cols, shape.switches)
    diags: list[Diagnostic] = []
    mismatched: dict[str, list[tuple[int, int]]] = {p: [] for p in POLARITIES}
    compare = tile is not None and tile.shape == (shape.rows, shape.cols)
    for (p, i, j), g in cells.items():
        name = memory_name(p, i, j)
        if not (lo <= g <= hi):
            diags.append(
                _diag(
                    "CONDUCTANCE_OUT_OF_RANGE",
                    name,
                    f"cell ({i},{j},{p}) conductance {g:.6g} S outside "
                    f"[{device.g_min:.6g}, {device.g_max:.6g}] for {device.name}",
                    n,
                    row=i,
                    col=j,
                    polarity=p,
                    value=g,
                )
            )
        elif compare:
            assert tile is not None
            target = float(tile.polarity(p)[i, j])
            if not np.isclose(g, target, rtol=1e-6, atol=0.0):
                mismatched[p].append((i, j))
    for p, cells_off in mismatched.items():
        if cells_off:
            i, j = cells_off[0]
            diags.append(
                _diag(
                    "CONDUCTANCE_MISMATCH",
                    memory_name(p, i, j),
                    f"{len(cells_off)} {p}-polarity cell(s) differ from the mapped tile, "
                    f"first at ({i},{j})",
                    n,
                    polarity=p,
                    count=len(cells_off),
                )
            )
    return diags


# ── Dynamic checks ────────────────────────────────────────────────────────────


def default_vectors(rows: int, vdd: float, n_random: int, seed: int = 0) -> list[np.ndarray]:
    """All rows at vdd, then n_random seeded uniform patterns in [0, vdd]."""
    rng = np.random.default_rng(seed)
    return [np.full(rows, vdd)] + [rng.uniform(0.0, vdd, rows) for _ in range(n_random)]


def ir_drop_envelope(g: np.ndarray, v_max: float, wire_r: float) -> np.ndarray:
    """Per-column bound on |I_j - I_ideal_j| for one polarity array."""
    rows, cols = g.shape
    if wire_r == 0:
        return np.zeros(cols)
    d = v_max * g.sum(axis=1)
    c = v_max * g.sum(axis=0)
    row_term = wire_r * np.arange(1, cols + 1) * (d @ g)
    col_term = wire_r * rows * c * g.sum(axis=0)
    return row_term + col_term


def _column_target(first: dict[str, Element], nodes: set[str], j: int) -> str:
    for candidate in (f"RCp_c{j}", f"RCn_c{j}"):
        if candidate in first:
            return candidate
    for p in POLARITIES:
        if col_node(p, j) in nodes:
            return col_node(p, j)
    return next((name for name in first if (m := _MEMORY_RE.match(name)) and int(m["j"]) == j), "")


def dynamic_check(
    n: Netlist,
    dp: DesignPoint,
    tile: ConductanceTile,
    vectors: Sequence[Sequence[float] | np.ndarray] | None = None,
    settings: VerifyConfig | None = None,
    catalog: DeviceCatalog | None = None,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
) -> list[Diagnostic]:
    """
    Solve the netlist per input vector and compare against ideal_mac on tile.

    Findings are returned as Error diagnostics; nothing is raised for a
    broken netlist.
    """
    settings = settings or VerifyConfig()
    catalog = catalog or load_catalog()
    rows, cols = tile.shape
    vdd = _annotated_float(n, "vdd", 1.0)
    wire_r = _annotated_float(n, "wire_r", catalog.tech(dp.tech).wire_r)
    if vectors is None:
        vectors = default_vectors(rows, vdd, settings.random_vectors, seed)
    first = _first_elements(n)
    nodes = n.nodes()
    anchor = n.elements[0].name if n.elements else ""

    try:
        system = build_system(n)
        solver = NodalSolver(system, tol=tol)
    except XbarError as e:
        culprits = e.details.get("nodes")
        has_culprit = isinstance(culprits, list) and bool(culprits)
        target = culprits[0] if has_culprit else e.details.get("element")
        return [_diag("SOLVE_FAILED", target or anchor, f"cannot build system: {e.message}", n)]

    found: dict[tuple[str, str], Diagnostic] = {}

    def report(code: str, target: str, message: str, **details: Any) -> None:
        found.setdefault((code, target), _diag(code, target or anchor, message, n, **details))

    for k, raw in enumerate(vectors):
        v = np.asarray(raw, dtype=float)
        if v.shape != (rows,):
            raise ContractError(f"vector {k} has length {v.size}, tile has {rows} rows")
        try:
            sources = pattern_to_sources(n, v)
            result = solver.solve(sources)
        except XbarError as e:
            report("SOLVE_FAILED", anchor, f"vector {k}: {e.message}", vector=k)
            continue

        measured = {p: np.zeros(cols) for p in POLARITIES}
        for p in POLARITIES:
            got = result.polarity_currents.get(p, np.zeros(0))[:cols]
            measured[p][: got.size] = got
        v_max = float(np.max(np.abs(v))) if v.size else 0.0
        ideal = {p: v @ tile.polarity(p) for p in POLARITIES}
        envelope = {p: ir_drop_envelope(tile.polarity(p), v_max, wire_r) for p in POLARITIES}
        scale = v @ (tile.g_pos + tile.g_neg)
        floor = settings.deviation_floor * np.abs(scale)
        bound = settings.envelope_slack * (envelope["p"] + envelope["n"]) + floor
        net = measured["p"] - measured["n"]
        target = ideal["p"] - ideal["n"]
        deviation = np.abs(net - target)

        for j in np.flatnonzero(deviation > bound):
            report(
                "CURRENT_DEVIATION",
                _column_target(first, nodes, int(j)),
                f"column {j}: |I - I_ideal| = {deviation[j]:.3e} A exceeds bound {bound[j]:.3e} A "
                f"(vector {k})",
                column=int(j),
                vector=k,
                deviation=float(deviation[j]),
            )
        for p in POLARITIES:
            limit = ideal[p] + settings.envelope_slack * envelope[p] + floor
            for j in np.flatnonzero(np.abs(measured[p]) > limit):
                report(
                    "CURRENT_EXCEEDS_IDEAL",
                    _column_target(first, nodes, int(j)),
                    f"column {j} ({p}): {measured[p][j]:.3e} A above ideal {ideal[p][j]:.3e} A",
                    column=int(j),
                    polarity=p,
                    vector=k,
                )
        significant = np.abs(target) > bound + settings.sign_threshold * np.abs(scale)
        flipped = significant & (np.sign(net) != np.sign(target))
        for j in np.flatnonzero(flipped):
            report(
                "SIGN_MISMATCH",
                _column_target(first, nodes, int(j)),
                f"column {j}: differential current {net[j]:.3e} A, expected {target[j]:.3e} A "
                f"(vector {k})",
                column=int(j),
                vector=k,
            )

        residuals = kcl_residuals(system.with_sources(sources), result)
        if residuals:
            worst = max(residuals, key=lambda name: residuals[name])
            if residuals[worst] > settings.kcl_tol:
                report(
                    "KCL_VIOLATION",
                    worst,
                    f"node {worst}: KCL residual {residuals[worst]:.3e} of local scale "
                    f"(vector {k})",
                    vector=k,
                )
    return list(found.values())


def check_netlist(
    n: Netlist,
    dp: DesignPoint,
    tile: ConductanceTile | None = None,
    settings: VerifyConfig | None = None,
    catalog: DeviceCatalog | None = None,
    seed: int = 0,
) -> list[Diagnostic]:
    """static_check, then dynamic_check when a tile is given and the lint is clean."""
    catalog = catalog or load_catalog()
    diags = static_check(n, dp, catalog, tile)
    if tile is not None and not has_errors(diags):
        diags.extend(dynamic_check(n, dp, tile, settings=settings, catalog=catalog, seed=seed))
    return diags


def verify_netlist_text(
    text: str,
    dp: DesignPoint,
    tile: ConductanceTile | None = None,
    dynamic: bool = False,
    settings: VerifyConfig | None = None,
    catalog: DeviceCatalog | None = None,
    seed: int = 0,
) -> list[Diagnostic]:
    """
    Parse and check netlist text. Syntax problems become PARSE_ERROR
    diagnostics; with dynamic and no tile, the programmed conductances are
    read back from the netlist itself.
    """
    catalog = catalog or load_catalog()
    try:
        n = parse_spice(text, allow_duplicates=True)
    except SpiceSyntaxError as e:
        return [
            Diagnostic(
                ERROR, "PARSE_ERROR", e.details.get("token", ""), e.message, e.details.get("line")
            )
        ]
    except XbarError as e:
        return [Diagnostic(ERROR, "PARSE_ERROR", "", e.message, e.details.get("line"))]
    if dynamic and tile is None:
        tile = tile_from_netlist(n, dp, catalog)
    return check_netlist(n, dp, tile if dynamic else None, settings, catalog, seed)


# ── Fault injection ───────────────────────────────────────────────────────────


class FaultKind(StrEnum):
    DROP_ELEMENT = "drop_element"
    SHORT_NODES = "short_nodes"
    OPEN_COLUMN = "open_column"
    OUT_OF_RANGE_CONDUCTANCE = "out_of_range_conductance"
    DUPLICATE_NAME = "duplicate_name"
    FLOATING_NODE = "floating_node"
    WRONG_ELEMENT_COUNT = "wrong_element_count"
    POLARITY_MIXUP = "polarity_mixup"
    SOURCE_MISBIND = "source_misbind"
    GROUND_DETACH = "ground_detach"


_KIND_INDEX = {kind: k for k, kind in enumerate(FaultKind)}


@dataclass(frozen=True)
class FaultSpec:
    kind: FaultKind
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", FaultKind(self.kind))
        if self.seed < 0:
            raise ContractError(f"fault seed must be >= 0, got {self.seed}")


def _require(condition: bool, kind: FaultKind, what: str) -> None:
    if not condition:
        raise ContractError(f"{kind.value} not applicable: {what}", details={"fault": kind.value})


def _replace_nodes(e: Element, mapping: dict[str, str]) -> Element:
    if e.kind == "S":
        ctrl, a, b = e.nodes
        return Element(e.kind, e.name, (ctrl, mapping.get(a, a), mapping.get(b, b)), e.value)
    return Element(e.kind, e.name, tuple(mapping.get(x, x) for x in e.nodes), e.value)


def inject_fault(n: Netlist, f: FaultSpec, catalog: DeviceCatalog | None = None) -> Netlist:
    """
    Mutated copy of n realising fault f; deterministic in (kind, seed).

    Raises:
        ContractError: the fault cannot be applied to this netlist.
    """
    rng = np.random.default_rng([f.seed, _KIND_INDEX[f.kind]])
    elements = list(n.elements)
    memories = [k for k, e in enumerate(elements) if _MEMORY_RE.match(e.name)]
    kind = f.kind

    def pick(seq: Sequence[Any]) -> Any:
        return seq[int(rng.integers(len(seq)))]

    if kind is FaultKind.DROP_ELEMENT:
        _require(bool(elements), kind, "netlist has no elements")
        del elements[int(rng.integers(len(elements)))]

    elif kind is FaultKind.SHORT_NODES:
        nodes = n.nodes()
        cols = sorted(
            (m["p"], int(m["j"])) for x in nodes if (m := _COL_NODE_RE.match(x))
        )
        pairs = [
            (col_node(p, j), col_node(p, j + 1)) for p, j in cols if col_node(p, j + 1) in nodes
        ]
        if not pairs:
            cells = sorted(
                (m["p"], int(m["i"]), int(m["j"]))
                for k in memories
                if (m := _MEMORY_RE.match(elements[k].name))
            )
            cell_set = set(cells)
            pairs = [
                (f"{p}_r{i}_c{j}", f"{p}_r{i}_c{j + 1}")
                for p, i, j in cells
                if (p, i, j + 1) in cell_set
            ]
        _require(bool(pairs), kind, "needs two adjacent columns")
        a, b = pick(pairs)
        elements.append(Element("R", f"RSHORT_{a}_{b}", (a, b), SHORT_RESISTANCE))

    elif kind is FaultKind.OPEN_COLUMN:
        senses = [k for k, e in enumerate(elements) if e.name.startswith("RC")]
        if senses:
            del elements[pick(senses)]
        else:
            _require(bool(memories), kind, "no memory cells to disconnect")
            m = _MEMORY_RE.match(elements[pick(memories)].name)
            assert m is not None
            p, j = m["p"], int(m["j"])
            open_node = f"{p}_col{j}_open"
            for k in memories:
                mk = _MEMORY_RE.match(elements[k].name)
                if mk and mk["p"] == p and int(mk["j"]) == j:
                    elements[k] = _replace_nodes(elements[k], {n.ground_node: open_node})

    elif kind is FaultKind.OUT_OF_RANGE_CONDUCTANCE:
        _require(bool(memories), kind, "no memory cells")
        k = pick(memories)
        value = elements[k].value * 1e4
        device = n.annotations.get("device")
        if device:
            try:
                value = max(value, 10.0 * (catalog or load_catalog()).device(device).r_off)
            except DesignError:
                pass
        e = elements[k]
        elements[k] = Element(e.kind, e.name, e.nodes, value)

    elif kind is FaultKind.DUPLICATE_NAME:
        _require(len(elements) >= 2, kind, "needs at least two elements")
        a, b = rng.choice(len(elements), size=2, replace=False)
        e = elements[int(b)]
        elements[int(b)] = Element(e.kind, elements[int(a)].name, e.nodes, e.value)

    elif kind is FaultKind.FLOATING_NODE:
        resistors = [k for k, e in enumerate(elements) if e.kind == "R"] or memories
        _require(bool(resistors), kind, "no resistor to isolate")
        k = pick(resistors)
        e = elements[k]
        elements[k] = Element(e.kind, e.name, (f"{e.name}_fa", f"{e.name}_fb"), e.value)

    elif kind is FaultKind.WRONG_ELEMENT_COUNT:
        _require(bool(memories), kind, "no memory cells")
        e = elements[pick(memories)]
        elements.append(Element(e.kind, f"{e.name}_extra", e.nodes, e.value))

    elif kind is FaultKind.POLARITY_MIXUP:
        index = {e.name: k for k, e in enumerate(elements)}
        pairs = []
        for k in memories:
            m = _MEMORY_RE.match(elements[k].name)
            if m and m["p"] == "p":
                other = index.get(memory_name("n", int(m["i"]), int(m["j"])))
                if other is not None:
                    pairs.append((k, other))
        _require(bool(pairs), kind, "needs both polarity arrays")
        for kp, kn in pairs:
            ep, en = elements[kp], elements[kn]
            elements[kp] = Element(ep.kind, ep.name, ep.nodes, en.value)
            elements[kn] = Element(en.kind, en.name, en.nodes, ep.value)

    elif kind is FaultKind.SOURCE_MISBIND:
        sources = [k for k, e in enumerate(elements) if e.kind == "V"]
        _require(bool(sources), kind, "no voltage sources")
        k = pick(sources)
        e = elements[k]
        others = sorted({elements[s].nodes[0] for s in sources} - {e.nodes[0]})
        new_node = pick(others) if others else f"{e.nodes[0]}_misbound"
        elements[k] = Element(e.kind, e.name, (new_node, e.nodes[1]), e.value)

    elif kind is FaultKind.GROUND_DETACH:
        _require(n.ground_node in n.nodes(), kind, "ground is not referenced")
        elements = [_replace_nodes(e, {n.ground_node: DETACHED_GROUND}) for e in elements]

    logger.debug("injected %s (seed %d) into %s", kind.value, f.seed, n.title)
    return Netlist(n.title, elements, dict(n.annotations), n.ground_node)


@dataclass(frozen=True)
class CampaignRecord:
    kind: FaultKind
    seed: int
    codes: tuple[str, ...]

    @property
    def detected(self) -> bool:
        return bool(self.codes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "seed": self.seed,
            "detected": self.detected,
            "codes": list(self.codes),
        }


def fault_campaign(
    dp: DesignPoint,
    tile: ConductanceTile,
    kinds: Sequence[FaultKind] = tuple(FaultKind),
    seeds: Iterable[int] = range(20),
    opts: GeneratorOptions | None = None,
    settings: VerifyConfig | None = None,
    max_workers: int | None = None,
) -> list[CampaignRecord]:
    """
    Inject every (kind, seed) into a fresh netlist and record the Error codes
    raised by static ∪ dynamic checks. Runs in threads; results come back in
    (kind, seed) order.
    """
    opts = opts or GeneratorOptions()
    catalog = opts.catalog or load_catalog()
    base = generate_crossbar_netlist(dp, tile, opts)
    jobs = [(FaultKind(k), s) for k in kinds for s in seeds]

    def run(job: tuple[FaultKind, int]) -> CampaignRecord:
        kind, seed = job
        faulty = inject_fault(base, FaultSpec(kind, seed), catalog)
        diags = static_check(faulty, dp, catalog, tile)
        diags += dynamic_check(faulty, dp, tile, settings=settings, catalog=catalog, seed=seed)
        codes = sorted({d.code for d in diags if d.is_error})
        return CampaignRecord(kind, seed, tuple(codes))

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        records = list(pool.map(run, jobs))
    missed = [r for r in records if not r.detected]
    logger.info("fault campaign: %d injections, %d undetected", len(records), len(missed))
    return records


# ── Repair loop ───────────────────────────────────────────────────────────────


Generator = Callable[
    [DesignPoint, ConductanceTile, Sequence[Diagnostic], "Netlist | None"], Netlist
]


def apply_fixups(
    n: Netlist, diags: Sequence[Diagnostic], dp: DesignPoint, catalog: DeviceCatalog | None = None
) -> Netlist | None:
    """
    Repair a netlist whose Error diagnostics are all fixable: restore a
    detached ground, rename duplicates back to the missing skeleton name with
    identical nodes. Returns None when anything else is wrong.
    """
    errors = [d for d in diags if d.is_error]
    if not errors or any(d.code not in FIXABLE_CODES for d in errors):
        return None
    catalog = catalog or load_catalog()
    elements = list(n.elements)

    for d in errors:
        if d.code == "GROUND_DETACHED":
            elements = [_replace_nodes(e, {d.element_or_node: n.ground_node}) for e in elements]

    if any(d.code in ("DUPLICATE_NAME", "MISSING_ELEMENT") for d in errors):
        shape = _shape(n, dp, catalog)
        skeleton = crossbar_skeleton(shape.rows, shape.cols, shape.switches, shape.with_wires)
        seen: set[str] = set()
        present = {e.name for e in elements}
        missing = [s for s in skeleton if s.name not in present]
        for k, e in enumerate(elements):
            if e.name not in seen:
                seen.add(e.name)
                continue
            match = [s for s in missing if s.kind == e.kind and s.nodes == e.nodes]
            if len(match) != 1:
                return None
            elements[k] = Element(e.kind, match[0].name, e.nodes, e.value)
            missing.remove(match[0])
            seen.add(match[0].name)
    return Netlist(n.title, elements, dict(n.annotations), n.ground_node)


@dataclass
class CrossbarGenerator:
    """Default generator: fix up the previous netlist when possible, else regenerate."""

    opts: GeneratorOptions = field(default_factory=GeneratorOptions)

    def __call__(
        self,
        dp: DesignPoint,
        tile: ConductanceTile,
        feedback: Sequence[Diagnostic] = (),
        previous: Netlist | None = None,
    ) -> Netlist:
        catalog = self.opts.catalog or load_catalog()
        if previous is not None and feedback:
            fixed = apply_fixups(previous, feedback, dp, catalog)
            if fixed is not None and not has_errors(static_check(fixed, dp, catalog, tile)):
                logger.info("repaired %s by fixups", design_key(dp))
                return fixed
        return generate_crossbar_netlist(dp, tile, self.opts)


@dataclass
class LoopOutcome:
    accepted: bool
    netlist: Netlist | None
    rounds: int
    history: list[list[Diagnostic]]

    def to_dict(self) -> dict[str, Any]:
        return {
            "accepted": self.accepted,
            "rounds": self.rounds,
            "history": [[d.to_dict() for d in round_] for round_ in self.history],
        }


def verification_loop(
    dp: DesignPoint,
    tile: ConductanceTile,
    generator: Generator | None = None,
    max_rounds: int = 3,
    settings: VerifyConfig | None = None,
    catalog: DeviceCatalog | None = None,
) -> LoopOutcome:
    """
    generate → check, feeding diagnostics back, for at most max_rounds rounds.

    Raises:
        ContractError: max_rounds < 1.
    """
    if max_rounds < 1:
        raise ContractError(f"max_rounds must be >= 1, got {max_rounds}")
    catalog = catalog or load_catalog()
    generator = generator or CrossbarGenerator(GeneratorOptions(catalog=catalog))
    history: list[list[Diagnostic]] = []
    feedback: list[Diagnostic] = []
    previous: Netlist | None = None

    for round_ in range(1, max_rounds + 1):
        try:
            n = generator(dp, tile, feedback, previous)
        except XbarError as e:
            diags = [_diag("GENERATION_FAILED", design_key(dp), e.message)]
            history.append(diags)
            feedback, previous = diags, None
            continue
        diags = check_netlist(n, dp, tile, settings, catalog)
        history.append(diags)
        if not has_errors(diags):
            logger.info("%s accepted at round %d", design_key(dp), round_)
            return LoopOutcome(True, n, round_, history)
        logger.info(
            "%s round %d: %d error(s)", design_key(dp), round_, sum(d.is_error for d in diags)
        )
        feedback, previous = diags, n
    return LoopOutcome(False, None, max_rounds, history)
