"""SPICE netlists for differential crossbar array pairs.

Topology of one polarity array (prefix ``p`` or ``n``), rows i, columns j:

    V{p}_row{i}        {p}_row{i}_s0 → 0                 DAC voltage V_i
    RW{p}_r{i}_s{k}    {p}_row{i}_s{k} → {p}_row{i}_s{k+1}   row segment, k = 0..cols-1
    RA{p}_r{i}_c{j}    {p}_row{i}_s{j+1} → {p}_r{i}_c{j}     access switch (ctrl {p}_wl{i})
    RA{p}_r{i}_c{j}b   second switch of a 2T1R cell, in parallel
    R{p}_r{i}_c{j}     {p}_r{i}_c{j} → {p}_col{j}        memory resistor
    RC{p}_c{j}         {p}_col{j} → 0                    lumped bit-line, wire_r * rows

Ground ``0`` is the column virtual-ground sense reference, biased at
V_ref = V_DD/2 in silicon (annotation ``v_ref``); sources are written
relative to it. With wire_r = 0 the row and column segments are omitted:
switches tap ``{p}_row{i}_s0`` and memory resistors terminate on ``0``.

Memory resistors are programmed to 1/G - R_access so that the whole cell
presents the mapped conductance G. Differential column current is
I_j = I_p,j - I_n,j = sum_i V_i (G+_ij - G-_ij) without parasitics.

Dialect (``.sp``)::

    * <title>
    *@<key> <value>              annotation
    V<name> <n+> <n-> DC <volts>
    R<name> <n1> <n2> <ohms>
    *switch ctrl=<net>           R cards up to *endswitch are access switches
    *endswitch
    .END

Values accept the suffixes T G MEG K M U N P F.
"""

from __future__ import annotations

import logging
import re
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from xbarcli.design_space import DeviceCatalog, design_key, load_catalog
from xbarcli.exceptions import (
    ConductanceRangeError,
    ContractError,
    DuplicateElementError,
    SpiceSyntaxError,
    UnsupportedElementError,
)
from xbarcli.models import ConductanceTile, DesignPoint

logger = logging.getLogger(__name__)

GROUND = "0"
POLARITIES = ("p", "n")

# Relative slack on the device window; mapped levels sit exactly on its edges.
RANGE_RTOL = 1e-9

_SUFFIXES = {
    "T": 1e12,
    "G": 1e9,
    "MEG": 1e6,
    "K": 1e3,
    "M": 1e-3,
    "U": 1e-6,
    "N": 1e-9,
    "P": 1e-12,
    "F": 1e-15,
}
_NUMBER_RE = re.compile(
    r"^(?P<num>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(?P<suffix>MEG|[TGKMUNPF])?[A-Z]*$",
    re.IGNORECASE,
)


# ── Data model ────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Element:
    """One circuit element.

    kind is "R" (resistor), "V" (DC source) or "S" (access switch). Switch
    nodes are (control, in, out); the other kinds carry two nodes.
    """

    kind: str
    name: str
    nodes: tuple[str, ...]
    value: float

    @property
    def terminals(self) -> tuple[str, str]:
        """The two DC terminals (switch control excluded)."""
        if self.kind == "S":
            return self.nodes[1], self.nodes[2]
        return self.nodes[0], self.nodes[1]

    @property
    def control(self) -> str | None:
        return self.nodes[0] if self.kind == "S" else None

    @property
    def conductance(self) -> float:
        return 1.0 / self.value


@dataclass
class Netlist:
    """An element list with named nodes; ground is always "0"."""

    title: str = ""
    elements: list[Element] = field(default_factory=list)
    annotations: dict[str, str] = field(default_factory=dict)
    ground_node: str = GROUND
    # source line per element name, set by parse_spice
    lines: dict[str, int] = field(default_factory=dict, compare=False)

    def element_map(self) -> dict[str, Element]:
        return {e.name: e for e in self.elements}

    def nodes(self) -> set[str]:
        """All DC nodes, ground included when referenced."""
        out: set[str] = set()
        for e in self.elements:
            out.update(e.terminals)
        return out

    def structurally_equal(self, other: Netlist) -> bool:
        """Name-keyed, order-insensitive equality of content."""
        if self.title.strip() != other.title.strip():
            return False
        if self.annotations != other.annotations or self.ground_node != other.ground_node:
            return False
        if len(self.elements) != len(other.elements):
            return False
        return self.element_map() == other.element_map()

    def replace_sources(self, voltages: dict[str, float]) -> Netlist:
        """Copy with the named sources set to new values."""
        elements = [
            Element(e.kind, e.name, e.nodes, float(voltages[e.name]))
            if e.kind == "V" and e.name in voltages
            else e
            for e in self.elements
        ]
        return Netlist(self.title, elements, dict(self.annotations), self.ground_node)


@dataclass
class GeneratorOptions:
    """Knobs for generate_crossbar_netlist."""

    wire_r: float | None = None  # ohms per segment; None → tech default
    vdd: float = 1.0
    input_pattern: Sequence[float] | None = None  # volts per row; None → vdd on every row
    catalog: DeviceCatalog | None = None


# ── Skeleton ──────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class SkeletonSlot:
    """Expected name and nodes of one element, with its role in the array."""

    kind: str
    name: str
    nodes: tuple[str, ...]
    role: str  # source | row_wire | switch | memory | col_wire
    polarity: str
    row: int = -1
    col: int = -1


def row_node(p: str, i: int, k: int) -> str:
    return f"{p}_row{i}_s{k}"


def cell_node(p: str, i: int, j: int) -> str:
    return f"{p}_r{i}_c{j}"


def col_node(p: str, j: int) -> str:
    return f"{p}_col{j}"


def memory_name(p: str, i: int, j: int) -> str:
    return f"R{p}_r{i}_c{j}"


def switch_names(p: str, i: int, j: int, switches: int) -> list[str]:
    base = f"RA{p}_r{i}_c{j}"
    return [base] + [f"{base}{chr(ord('a') + s)}" for s in range(1, switches)]


def source_name(p: str, i: int) -> str:
    return f"V{p}_row{i}"


def crossbar_skeleton(rows: int, cols: int, switches: int, with_wires: bool) -> list[SkeletonSlot]:
    """Every element a generated netlist of this shape must contain, in emit order."""
    slots: list[SkeletonSlot] = []
    for p in POLARITIES:
        for i in range(rows):
            slots.append(
                SkeletonSlot("V", source_name(p, i), (row_node(p, i, 0), GROUND), "source", p, i)
            )
            if with_wires:
                for k in range(cols):
                    slots.append(
                        SkeletonSlot(
                            "R",
                            f"RW{p}_r{i}_s{k}",
                            (row_node(p, i, k), row_node(p, i, k + 1)),
                            "row_wire",
                            p,
                            i,
                            k,
                        )
                    )
            for j in range(cols):
                tap = row_node(p, i, j + 1) if with_wires else row_node(p, i, 0)
                for name in switch_names(p, i, j, switches):
                    slots.append(
                        SkeletonSlot(
                            "S", name, (f"{p}_wl{i}", tap, cell_node(p, i, j)), "switch", p, i, j
                        )
                    )
            for j in range(cols):
                sink = col_node(p, j) if with_wires else GROUND
                slots.append(
                    SkeletonSlot(
                        "R", memory_name(p, i, j), (cell_node(p, i, j), sink), "memory", p, i, j
                    )
                )
        if with_wires:
            for j in range(cols):
                slots.append(
                    SkeletonSlot("R", f"RC{p}_c{j}", (col_node(p, j), GROUND), "col_wire", p, -1, j)
                )
    return slots


def expected_element_count(rows: int, cols: int, switches: int, with_wires: bool) -> int:
    """2rc memory + 2rc*switches + (2(rc + c) wire segments) + 2r sources."""
    count = 2 * rows * cols + 2 * rows * cols * switches + 2 * rows
    if with_wires:
        count += 2 * (rows * cols + cols)
    return count


# ── Generation ────────────────────────────────────────────────────────────────


def generate_crossbar_netlist(
    dp: DesignPoint, tile: ConductanceTile, opts: GeneratorOptions | None = None
) -> Netlist:
    """
    Build the differential array-pair netlist for a full crossbar.

    Raises:
        ContractError: tile or input pattern shape disagrees with dp.
        ConductanceRangeError: a conductance lies outside the device window.
    """
    return _generate(dp, tile, opts or GeneratorOptions(), (dp.rows, dp.cols), None)


def generate_partitioned_netlists(
    dp: DesignPoint, tile: ConductanceTile, opts: GeneratorOptions | None = None
) -> list[Netlist]:
    """One netlist per partition sub-array, row-major over (h, v)."""
    opts = opts or GeneratorOptions()
    if tile.shape != (dp.rows, dp.cols):
        raise ContractError(f"tile shape {tile.shape} != design {dp.rows}x{dp.cols}")
    h, v = dp.partition
    tr, tc = dp.tile_shape
    pattern = _pattern(opts, dp.rows)
    out = []
    for a in range(h):
        for b in range(v):
            sub = tile.submatrix(a * tr, (a + 1) * tr, b * tc, (b + 1) * tc)
            sub_opts = GeneratorOptions(
                opts.wire_r, opts.vdd, pattern[a * tr : (a + 1) * tr], opts.catalog
            )
            out.append(_generate(dp, sub, sub_opts, (tr, tc), (a, b)))
    return out


def _generate(
    dp: DesignPoint,
    tile: ConductanceTile,
    opts: GeneratorOptions,
    shape: tuple[int, int],
    tile_index: tuple[int, int] | None,
) -> Netlist:
    rows, cols = shape
    if tile.shape != shape:
        raise ContractError(
            f"tile shape {tile.shape} != expected {rows}x{cols}",
            details={"tile": list(tile.shape), "expected": [rows, cols]},
        )
    catalog = opts.catalog or load_catalog()
    device = catalog.device(dp.device)
    bitcell = catalog.bitcell(dp.bitcell)
    tech = catalog.tech(dp.tech)
    wire_r = tech.wire_r if opts.wire_r is None else float(opts.wire_r)
    if wire_r < 0:
        raise ContractError(f"wire_r must be >= 0, got {wire_r}")
    pattern = _pattern(opts, rows)
    r_access = bitcell.effective_access_resistance

    memory: dict[str, float] = {}
    for p in POLARITIES:
        g = tile.polarity(p)
        for (i, j), value in np.ndenumerate(g):
            check_conductance(float(value), device.g_min, device.g_max, i, j, p)
            r_mem = 1.0 / float(value) - r_access
            if r_mem <= 0:
                raise ConductanceRangeError(i, j, p, float(value), device.g_min, 1.0 / r_access)
            memory[memory_name(p, i, j)] = r_mem

    elements: list[Element] = []
    for slot in crossbar_skeleton(rows, cols, bitcell.switches, wire_r > 0):
        if slot.role == "source":
            value = float(pattern[slot.row])
        elif slot.role == "row_wire":
            value = wire_r
        elif slot.role == "col_wire":
            value = wire_r * rows
        elif slot.role == "switch":
            value = bitcell.access_resistance
        else:
            value = memory[slot.name]
        elements.append(Element(slot.kind, slot.name, slot.nodes, value))

    key = design_key(dp)
    annotations = {
        "design_key": key,
        "polarity": "p,n",
        "tech_nm": str(dp.tech),
        "device": dp.device,
        "bitcell": dp.bitcell,
        "rows": str(rows),
        "cols": str(cols),
        "wire_r": repr(wire_r),
        "wire_c_ff": repr(tech.wire_c_ff),
        "vdd": repr(float(opts.vdd)),
        "v_ref": repr(float(opts.vdd) / 2.0),
    }
    title = f"xbarcli crossbar {key}"
    if tile_index is not None:
        annotations["tile"] = f"{tile_index[0]},{tile_index[1]}"
        title += f" tile {tile_index[0]},{tile_index[1]}"
    logger.debug("generated %s: %d elements", title, len(elements))
    return Netlist(title, elements, annotations)


def check_conductance(value: float, g_min: float, g_max: float, i: int, j: int, p: str) -> None:
    if not np.isfinite(value) or not (
        g_min * (1 - RANGE_RTOL) <= value <= g_max * (1 + RANGE_RTOL)
    ):
        raise ConductanceRangeError(i, j, p, value, g_min, g_max)


def _pattern(opts: GeneratorOptions, rows: int) -> np.ndarray:
    if opts.input_pattern is None:
        return np.full(rows, float(opts.vdd))
    pattern = np.asarray(opts.input_pattern, dtype=float)
    if pattern.shape != (rows,):
        raise ContractError(f"input pattern length {pattern.size} != rows {rows}")
    return pattern


# ── Emission ──────────────────────────────────────────────────────────────────


def emit_spice(n: Netlist) -> str:
    """Serialize to the dialect above. Byte-deterministic; ends with '.END\\n'."""
    lines = [f"* {n.title}".rstrip()]
    for key, value in n.annotations.items():
        lines.append(f"*@{key} {value}")
    open_ctrl: str | None = None
    for e in n.elements:
        if e.kind == "S":
            if e.control != open_ctrl:
                if open_ctrl is not None:
                    lines.append("*endswitch")
                lines.append(f"*switch ctrl={e.control}")
                open_ctrl = e.control
            lines.append(f"{e.name} {e.nodes[1]} {e.nodes[2]} {_fmt(e.value)}")
            continue
        if open_ctrl is not None:
            lines.append("*endswitch")
            open_ctrl = None
        if e.kind == "V":
            lines.append(f"{e.name} {e.nodes[0]} {e.nodes[1]} DC {_fmt(e.value)}")
        else:
            lines.append(f"{e.name} {e.nodes[0]} {e.nodes[1]} {_fmt(e.value)}")
    if open_ctrl is not None:
        lines.append("*endswitch")
    lines.append(".END")
    return "\n".join(lines) + "\n"


def _fmt(value: float) -> str:
    return repr(float(value))


# ── Parsing ───────────────────────────────────────────────────────────────────


def parse_value(token: str) -> float:
    """'10k' → 10000.0, '1MEG' → 1e6, '5m' → 0.005. Raises ValueError."""
    m = _NUMBER_RE.match(token)
    if not m:
        raise ValueError(token)
    value = float(m["num"])
    suffix = m["suffix"]
    if suffix:
        value *= _SUFFIXES[suffix.upper()]
    return value


def parse_spice(text: str, allow_duplicates: bool = False) -> Netlist:
    """
    Parse the dialect subset back into a Netlist.

    With allow_duplicates, repeated names are kept (for linting) and
    netlist.lines records the first occurrence.

    Raises:
        SpiceSyntaxError: malformed card, with line/column/token.
        UnsupportedElementError: card kind outside {R, V}.
        DuplicateElementError: two cards share a name.
    """
    netlist = Netlist()
    first_line: dict[str, int] = {}
    ctrl: str | None = None
    ctrl_line = 0
    saw_content = False

    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line:
            continue
        if line.startswith("*"):
            if line.startswith("*@"):
                key, _, value = line[2:].partition(" ")
                if not key:
                    raise SpiceSyntaxError("empty annotation key", lineno, 3, line)
                netlist.annotations[key] = value.strip()
            elif line.lower().startswith("*switch"):
                if ctrl is not None:
                    raise SpiceSyntaxError("nested *switch block", lineno, 1, line)
                ctrl = _parse_ctrl(line, lineno)
                ctrl_line = lineno
            elif line.lower().startswith("*endswitch"):
                if ctrl is None:
                    raise SpiceSyntaxError("*endswitch without *switch", lineno, 1, line)
                ctrl = None
            elif not saw_content and not netlist.title:
                netlist.title = line[1:].strip()
            saw_content = True
            continue
        saw_content = True
        if line.startswith("."):
            if line.upper() == ".END":
                break
            raise UnsupportedElementError(lineno, line.split()[0])

        tokens = line.split()
        name = tokens[0]
        kind = name[0].upper()
        if kind == "R":
            element = _parse_resistor(tokens, raw_line, lineno, ctrl)
        elif kind == "V":
            element = _parse_source(tokens, raw_line, lineno)
        else:
            raise UnsupportedElementError(lineno, name)

        if name in first_line:
            if not allow_duplicates:
                raise DuplicateElementError(name, first_line[name], lineno)
        else:
            first_line[name] = lineno
        netlist.elements.append(element)

    if ctrl is not None:
        raise SpiceSyntaxError("unterminated *switch block", ctrl_line, 1, "*switch")
    netlist.lines = first_line
    return netlist


def _parse_ctrl(line: str, lineno: int) -> str:
    for part in line.split()[1:]:
        if part.lower().startswith("ctrl="):
            net = part[5:]
            if net:
                return net
    raise SpiceSyntaxError("switch block needs ctrl=<net>", lineno, 1, line)


def _column(raw_line: str, tokens: list[str], index: int) -> int:
    """1-based column of tokens[index] within raw_line."""
    pos = 0
    for k, t in enumerate(tokens):
        pos = raw_line.index(t, pos)
        if k == index:
            break
        pos += len(t)
    return pos + 1


def _parse_number(tokens: list[str], index: int, raw_line: str, lineno: int) -> float:
    try:
        value = parse_value(tokens[index])
    except ValueError:
        raise SpiceSyntaxError(
            "unparsable value", lineno, _column(raw_line, tokens, index), tokens[index]
        ) from None
    if not np.isfinite(value):
        raise SpiceSyntaxError(
            "non-finite value", lineno, _column(raw_line, tokens, index), tokens[index]
        )
    return value


def _parse_resistor(tokens: list[str], raw_line: str, lineno: int, ctrl: str | None) -> Element:
    if len(tokens) != 4:
        bad = min(len(tokens) - 1, 4)
        raise SpiceSyntaxError(
            "resistor card needs 'Rname n1 n2 value'",
            lineno,
            _column(raw_line, tokens, bad),
            tokens[bad],
        )
    value = _parse_number(tokens, 3, raw_line, lineno)
    if ctrl is not None:
        if value < 0:
            raise SpiceSyntaxError(
                "negative switch resistance", lineno, _column(raw_line, tokens, 3), tokens[3]
            )
        return Element("S", tokens[0], (ctrl, tokens[1], tokens[2]), value)
    if value <= 0:
        raise SpiceSyntaxError(
            "non-positive resistance", lineno, _column(raw_line, tokens, 3), tokens[3]
        )
    return Element("R", tokens[0], (tokens[1], tokens[2]), value)


def _parse_source(tokens: list[str], raw_line: str, lineno: int) -> Element:
    if len(tokens) == 5 and tokens[3].upper() == "DC":
        value_index = 4
    elif len(tokens) == 4:
        value_index = 3
    else:
        bad = min(len(tokens) - 1, 5)
        raise SpiceSyntaxError(
            "source card needs 'Vname n+ n- DC value'",
            lineno,
            _column(raw_line, tokens, bad),
            tokens[bad],
        )
    value = _parse_number(tokens, value_index, raw_line, lineno)
    return Element("V", tokens[0], (tokens[1], tokens[2]), value)


def netlist_summary(n: Netlist) -> dict[str, Any]:
    """Counts by kind, for CLI output."""
    counts = {"R": 0, "V": 0, "S": 0}
    for e in n.elements:
        counts[e.kind] += 1
    return {
        "title": n.title,
        "design_key": n.annotations.get("design_key", ""),
        "elements": len(n.elements),
        "resistors": counts["R"],
        "switches": counts["S"],
        "sources": counts["V"],
        "nodes": len(n.nodes()),
    }
