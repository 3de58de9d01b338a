"""Crossbar electrical evaluation: closed-form MAC, nodal analysis, average power.

Voltage sources must be referenced to ground; their positive node is held at
the source value and eliminated from the unknowns, so every source
contributes a Norton current g * V to its neighbours' right-hand side. The
remaining conductance matrix is symmetric positive definite whenever each
island reaches a fixed node, which build_system checks up front.

Solver selection: sparse LU (``splu``) up to ``direct_threshold`` unknowns,
Jacobi-preconditioned conjugate gradient above. Both paths are held to the
same relative residual ||Gv - i|| / ||i|| <= tol.
"""

from __future__ import annotations

import logging
import math
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import LinearOperator, cg, splu

from xbarcli.exceptions import (
    CircuitError,
    ContractError,
    IslandError,
    NonConvergenceError,
    RangeError,
    SingularSystemError,
    SourceBindingError,
)
from xbarcli.models import ConductanceTile
from xbarcli.netlist import Netlist

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DIRECT_THRESHOLD = 5000
MAX_ITER_FACTOR = 20.0
# Zero-ohm switches are stamped with this resistance.
MIN_RESISTANCE = 1e-6

_SENSE_RE = re.compile(r"^(?:RC(?P<p1>[pn])_c(?P<j1>\d+)|R(?P<p2>[pn])_r\d+_c(?P<j2>\d+))$")
_ROW_SOURCE_RE = re.compile(r"^V(?P<p>[pn])_row(?P<i>\d+)$")


# ── Closed forms ──────────────────────────────────────────────────────────────


def ideal_mac(v: Sequence[float] | np.ndarray, tile: ConductanceTile) -> np.ndarray:
    """I_j = sum_i V_i (G+_ij - G-_ij), no network effects."""
    v = np.asarray(v, dtype=float)
    if v.shape != (tile.rows,):
        raise ContractError(f"input length {v.size} != tile rows {tile.rows}")
    return v @ (tile.g_pos - tile.g_neg)


def ideal_power(v: Sequence[float] | np.ndarray, tile: ConductanceTile) -> float:
    """Power drawn by both arrays without parasitics: sum_i V_i^2 sum_j (G+_ij + G-_ij)."""
    v = np.asarray(v, dtype=float)
    if v.shape != (tile.rows,):
        raise ContractError(f"input length {v.size} != tile rows {tile.rows}")
    return float((v * v) @ (tile.g_pos + tile.g_neg).sum(axis=1))


def dac_quantize(
    x: float | np.ndarray, n_bits: int | None, vdd: float = 1.0
) -> float | np.ndarray:
    """
    Map x in [0, 1] to the nearest of 2^n uniform levels k*vdd/(2^n - 1).

    n_bits=None is analog mode: x * vdd. Accepts scalars or arrays.

    Raises:
        RangeError: x outside [0, 1] or n_bits < 1.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise RangeError("DAC input outside [0, 1]", details={"min": float(np.min(arr))})
    if n_bits is None:
        out = arr * vdd
    else:
        if n_bits < 1:
            raise RangeError(f"n_bits must be >= 1, got {n_bits}")
        steps = (1 << n_bits) - 1
        out = np.round(arr * steps) / steps * vdd
    return float(out) if np.ndim(out) == 0 else out


# ── Nodal system ──────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class LinearSystem:
    """Ground- and source-eliminated nodal equations G v = i.

    ``coupling`` maps fixed-node voltages to the right-hand side, so that
    ``current_vector == coupling @ fixed_values``; re-solving for new source
    values only rebuilds the right-hand side.
    """

    dimension: int
    conductance_matrix: sp.csr_matrix
    current_vector: np.ndarray
    node_index: dict[str, int]  # unknown node → row
    node_names: list[str]  # all DC nodes, global order
    fixed_nodes: list[int]  # global indices held by sources or ground
    fixed_values: np.ndarray
    coupling: sp.csr_matrix
    sources: dict[str, int]  # source name → global node of n+
    ground_index: int  # -1 when the netlist never references ground
    # conductive elements in global indices, a → b
    elem_names: list[str] = field(repr=False)
    elem_a: np.ndarray = field(repr=False)
    elem_b: np.ndarray = field(repr=False)
    elem_g: np.ndarray = field(repr=False)

    @property
    def unknown_globals(self) -> np.ndarray:
        out = np.empty(self.dimension, dtype=int)
        lookup = {name: i for i, name in enumerate(self.node_names)}
        for name, row in self.node_index.items():
            out[row] = lookup[name]
        return out

    def with_sources(self, values: Mapping[str, float]) -> LinearSystem:
        """Same structure with new source voltages."""
        fixed = {g: float(v) for g, v in zip(self.fixed_nodes, self.fixed_values, strict=True)}
        assigned: dict[int, tuple[str, float]] = {}
        for name, node in self.sources.items():
            value = float(values.get(name, fixed[node]))
            if node in assigned and assigned[node][1] != value:
                raise SourceBindingError(
                    f"sources {assigned[node][0]} and {name} drive "
                    f"{self.node_names[node]} to different voltages",
                    details={"node": self.node_names[node]},
                )
            assigned[node] = (name, value)
            fixed[node] = value
        fixed_values = np.array([fixed[g] for g in self.fixed_nodes])
        return LinearSystem(
            self.dimension,
            self.conductance_matrix,
            self.coupling @ fixed_values,
            self.node_index,
            self.node_names,
            self.fixed_nodes,
            fixed_values,
            self.coupling,
            self.sources,
            self.ground_index,
            self.elem_names,
            self.elem_a,
            self.elem_b,
            self.elem_g,
        )


@dataclass
class SolveReport:
    """Node voltages and derived currents of one solve."""

    node_voltages: dict[str, float]
    column_currents: np.ndarray  # differential, amperes
    residual_norm: float
    iterations: int
    method: str
    polarity_currents: dict[str, np.ndarray] = field(default_factory=dict)
    source_currents: dict[str, float] = field(default_factory=dict)  # delivered, amperes
    source_power: dict[str, float] = field(default_factory=dict)
    element_currents: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    voltages: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def power(self) -> float:
        """Sum of V * I over sources."""
        return float(sum(self.source_power.values()))


def build_system(n: Netlist) -> LinearSystem:
    """
    Stamp the netlist into a sparse SPD system.

    Raises:
        SourceBindingError: a source not referenced to ground, or two sources
            forcing one node to different voltages.
        IslandError: nodes with no conductive path to ground or a source.
    """
    names: list[str] = []
    index: dict[str, int] = {}

    def gid(node: str) -> int:
        if node not in index:
            index[node] = len(names)
            names.append(node)
        return index[node]

    if any(n.ground_node in e.terminals for e in n.elements):
        gid(n.ground_node)

    fixed: dict[int, float] = {}
    if n.ground_node in index:
        fixed[index[n.ground_node]] = 0.0
    sources: dict[str, int] = {}
    owner: dict[int, str] = {}
    elem_names: list[str] = []
    ea: list[int] = []
    eb: list[int] = []
    eg: list[float] = []

    for e in n.elements:
        a, b = e.terminals
        if e.kind == "V":
            if b != n.ground_node or a == n.ground_node:
                raise SourceBindingError(
                    f"source {e.name} must drive a node against ground {n.ground_node!r}",
                    details={"element": e.name, "nodes": [a, b]},
                )
            node = gid(a)
            if node in fixed and node in owner and fixed[node] != e.value:
                raise SourceBindingError(
                    f"sources {owner[node]} and {e.name} drive {a} to different voltages",
                    details={"node": a, "elements": [owner[node], e.name]},
                )
            fixed[node] = float(e.value)
            owner[node] = e.name
            sources[e.name] = node
            continue
        r = max(float(e.value), MIN_RESISTANCE)
        elem_names.append(e.name)
        ea.append(gid(a))
        eb.append(gid(b))
        eg.append(1.0 / r)

    n_all = len(names)
    a_arr = np.asarray(ea, dtype=int)
    b_arr = np.asarray(eb, dtype=int)
    g_arr = np.asarray(eg, dtype=float)

    _check_islands(names, a_arr, b_arr, set(fixed))

    fixed_nodes = sorted(fixed)
    fixed_pos = {g: k for k, g in enumerate(fixed_nodes)}
    unknown = [g for g in range(n_all) if g not in fixed]
    local = np.full(n_all, -1, dtype=int)
    local[unknown] = np.arange(len(unknown))
    dim = len(unknown)

    la, lb = local[a_arr], local[b_arr]
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    data: list[np.ndarray] = []
    for x, y in ((la, lb), (lb, la)):
        m = x >= 0
        rows.append(x[m])
        cols.append(x[m])
        data.append(g_arr[m])
        both = m & (y >= 0)
        rows.append(x[both])
        cols.append(y[both])
        data.append(-g_arr[both])
    matrix = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    ).tocsr()

    c_rows: list[np.ndarray] = []
    c_cols: list[np.ndarray] = []
    c_data: list[np.ndarray] = []
    fpos = np.array([fixed_pos.get(g, -1) for g in range(n_all)], dtype=int)
    for x, y_glob in ((la, b_arr), (lb, a_arr)):
        m = (x >= 0) & (fpos[y_glob] >= 0)
        c_rows.append(x[m])
        c_cols.append(fpos[y_glob[m]])
        c_data.append(g_arr[m])
    coupling = sp.coo_matrix(
        (np.concatenate(c_data), (np.concatenate(c_rows), np.concatenate(c_cols))),
        shape=(dim, len(fixed_nodes)),
    ).tocsr()

    fixed_values = np.array([fixed[g] for g in fixed_nodes], dtype=float)
    logger.debug("built system: %d unknowns, %d fixed, %d elements", dim, len(fixed), len(eg))
    return LinearSystem(
        dimension=dim,
        conductance_matrix=matrix,
        current_vector=coupling @ fixed_values,
        node_index={names[g]: int(local[g]) for g in unknown},
        node_names=names,
        fixed_nodes=fixed_nodes,
        fixed_values=fixed_values,
        coupling=coupling,
        sources=sources,
        ground_index=index.get(n.ground_node, -1),
        elem_names=elem_names,
        elem_a=a_arr,
        elem_b=b_arr,
        elem_g=g_arr,
    )


def _check_islands(names: list[str], a: np.ndarray, b: np.ndarray, fixed: set[int]) -> None:
    n_all = len(names)
    if n_all == 0:
        return
    graph = sp.coo_matrix((np.ones(a.size), (a, b)), shape=(n_all, n_all))
    n_comp, labels = connected_components(graph, directed=False)
    anchored = {int(labels[g]) for g in fixed}
    floating = [names[g] for g in range(n_all) if int(labels[g]) not in anchored]
    if floating:
        raise IslandError(sorted(floating))


# ── Solving ───────────────────────────────────────────────────────────────────


class NodalSolver:
    """Factorize once, solve for many source assignments.

    Not thread-safe: keep one solver per worker.
    """

    def __init__(
        self,
        system: LinearSystem,
        tol: float = DEFAULT_TOL,
        max_iter: int | None = None,
        direct_threshold: int = DIRECT_THRESHOLD,
    ) -> None:
        self.system = system
        self.tol = tol
        self.max_iter = max_iter
        self.direct_threshold = direct_threshold
        self._lu = None
        self._precond: LinearOperator | None = None

    @classmethod
    def from_netlist(cls, n: Netlist, **kwargs: float | int | None) -> NodalSolver:
        return cls(build_system(n), **kwargs)  # type: ignore[arg-type]

    @property
    def method(self) -> str:
        return "direct" if self.system.dimension <= self.direct_threshold else "pcg"

    def solve(self, sources: Mapping[str, float] | None = None) -> SolveReport:
        system = self.system.with_sources(sources) if sources else self.system
        x, iterations = self._solve_vector(system)
        return _report(system, x, iterations, self.method)

    def _solve_vector(self, system: LinearSystem) -> tuple[np.ndarray, int]:
        dim = system.dimension
        b = system.current_vector
        if dim == 0:
            return np.zeros(0), 0
        if self.method == "direct":
            if self._lu is None:
                try:
                    self._lu = splu(system.conductance_matrix.tocsc())
                except RuntimeError:
                    raise SingularSystemError(_pivot_node(system)) from None
            x = self._lu.solve(b)
            iterations = 1
        else:
            x, iterations = self._pcg(system)
        residual = relative_residual(system, x)
        if not math.isfinite(residual) or residual > self.tol:
            raise NonConvergenceError(residual, iterations)
        return x, iterations

    def _pcg(self, system: LinearSystem) -> tuple[np.ndarray, int]:
        a = system.conductance_matrix
        b = system.current_vector
        if self._precond is None:
            diag = a.diagonal()
            if np.any(diag <= 0):
                raise SingularSystemError(_pivot_node(system))
            inv = 1.0 / diag
            self._precond = LinearOperator(a.shape, matvec=lambda r: inv * r, dtype=float)
        max_iter = self.max_iter or int(math.ceil(MAX_ITER_FACTOR * math.sqrt(system.dimension)))
        if not np.any(b):
            return np.zeros_like(b), 0
        count = 0
        best = (math.inf, np.zeros_like(b))

        def _track(xk: np.ndarray) -> None:
            nonlocal count, best
            count += 1
            if count % 25 == 0:
                res = relative_residual(system, xk)
                if res < best[0]:
                    best = (res, xk.copy())

        # Inner tolerance sits below the contract so the true residual clears it.
        x, info = cg(
            a, b, rtol=self.tol * 0.1, atol=0.0, maxiter=max_iter, M=self._precond, callback=_track
        )
        if info != 0:
            res = relative_residual(system, x)
            raise NonConvergenceError(min(res, best[0]), count)
        return x, count


def solve(
    sys_: LinearSystem,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    direct_threshold: int = DIRECT_THRESHOLD,
) -> SolveReport:
    """
    Solve G v = i to relative residual tol.

    Raises:
        NonConvergenceError: iterative path exhausted max_iter (carries best residual).
        SingularSystemError: zero pivot, naming a node.
    """
    return NodalSolver(sys_, tol, max_iter, direct_threshold).solve()


def relative_residual(system: LinearSystem, x: np.ndarray) -> float:
    b = system.current_vector
    r = float(np.linalg.norm(system.conductance_matrix @ x - b))
    bn = float(np.linalg.norm(b))
    return r / bn if bn > 0 else r


def _pivot_node(system: LinearSystem) -> str:
    diag = system.conductance_matrix.diagonal()
    bad = np.flatnonzero(diag <= 0)
    row = int(bad[0]) if bad.size else 0
    inverse = {r: name for name, r in system.node_index.items()}
    return inverse.get(row, "?")


def _report(system: LinearSystem, x: np.ndarray, iterations: int, method: str) -> SolveReport:
    n_all = len(system.node_names)
    v = np.zeros(n_all)
    v[system.fixed_nodes] = system.fixed_values
    if system.dimension:
        v[system.unknown_globals] = x
    currents = system.elem_g * (v[system.elem_a] - v[system.elem_b])
    net_out = np.bincount(system.elem_a, weights=currents, minlength=n_all) - np.bincount(
        system.elem_b, weights=currents, minlength=n_all
    )

    source_currents = {name: float(net_out[node]) for name, node in system.sources.items()}
    source_power = {
        name: float(v[node]) * source_currents[name] for name, node in system.sources.items()
    }

    polarity: dict[str, dict[int, float]] = {"p": {}, "n": {}}
    ground = system.ground_index
    for k, name in enumerate(system.elem_names):
        m = _SENSE_RE.match(name)
        if not m:
            continue
        a, b = int(system.elem_a[k]), int(system.elem_b[k])
        if b == ground:
            into_ground = currents[k]
        elif a == ground:
            into_ground = -currents[k]
        else:
            continue
        p = m["p1"] or m["p2"]
        j = int(m["j1"] or m["j2"])
        polarity[p][j] = polarity[p].get(j, 0.0) + float(into_ground)
    n_cols = max((max(d) + 1 for d in polarity.values() if d), default=0)
    pol_arrays = {
        p: np.array([polarity[p].get(j, 0.0) for j in range(n_cols)]) for p in ("p", "n")
    }

    return SolveReport(
        node_voltages={name: float(v[g]) for g, name in enumerate(system.node_names)},
        column_currents=pol_arrays["p"] - pol_arrays["n"],
        residual_norm=relative_residual(system, x) if system.dimension else 0.0,
        iterations=iterations,
        method=method,
        polarity_currents=pol_arrays,
        source_currents=source_currents,
        element_currents=currents,
        voltages=v,
        source_power=source_power,
    )


def kcl_residuals(system: LinearSystem, report: SolveReport) -> dict[str, float]:
    """Per unknown node: |sum of element currents| / (G_nn * V_max)."""
    n_all = len(system.node_names)
    currents = report.element_currents
    net_out = np.bincount(system.elem_a, weights=currents, minlength=n_all) - np.bincount(
        system.elem_b, weights=currents, minlength=n_all
    )
    v_max = float(np.max(np.abs(system.fixed_values))) if system.fixed_values.size else 0.0
    scale = system.conductance_matrix.diagonal() * v_max
    value = np.abs(net_out[system.unknown_globals])
    rel = np.divide(value, scale, out=value.copy(), where=scale > 0)
    inverse = sorted(system.node_index.items(), key=lambda item: item[1])
    return {name: float(rel[row]) for name, row in inverse}


# ── Power ─────────────────────────────────────────────────────────────────────


def pattern_to_sources(n: Netlist, pattern: Sequence[float] | np.ndarray) -> dict[str, float]:
    """
    Assign one input pattern to the netlist's sources.

    Crossbar netlists (sources named V{p}_row{i}) take one voltage per row,
    applied to both polarity arrays. Other netlists take one value per
    source in element order.
    """
    pattern = np.asarray(pattern, dtype=float)
    src = [e for e in n.elements if e.kind == "V"]
    matches = [_ROW_SOURCE_RE.match(e.name) for e in src]
    if src and all(matches):
        rows = max(int(m["i"]) for m in matches if m) + 1
        if pattern.shape != (rows,):
            raise ContractError(f"pattern length {pattern.size} != crossbar rows {rows}")
        return {e.name: float(pattern[int(m["i"])]) for e, m in zip(src, matches, strict=True) if m}
    if pattern.shape != (len(src),):
        raise ContractError(f"pattern length {pattern.size} != source count {len(src)}")
    return {e.name: float(x) for e, x in zip(src, pattern, strict=True)}


def average_power(
    n: Netlist,
    input_patterns: Iterable[Sequence[float] | np.ndarray],
    tol: float = DEFAULT_TOL,
    direct_threshold: int = DIRECT_THRESHOLD,
) -> float:
    """
    Mean over patterns of sum(V_source * I_source), in watts.

    Raises:
        ContractError: no patterns, a pattern of the wrong length, or a mean
            power below zero by more than the solve tolerance.
        CircuitError: a solve failed; details carry the pattern index.
    """
    patterns = list(input_patterns)
    if not patterns:
        raise ContractError("average_power needs at least one input pattern")
    solver = NodalSolver(build_system(n), tol=tol, direct_threshold=direct_threshold)
    total = 0.0
    magnitude = 0.0
    for k, pattern in enumerate(patterns):
        try:
            report = solver.solve(pattern_to_sources(n, pattern))
        except CircuitError as e:
            e.details["pattern"] = k
            e.message = f"pattern {k}: {e.message}"
            raise
        total += report.power
        magnitude += sum(abs(p) for p in report.source_power.values())
    mean = total / len(patterns)
    if mean < 0.0:
        # Passive networks dissipate; only solver rounding may dip below zero.
        if -mean > tol * magnitude / len(patterns):
            raise ContractError(
                f"average power is negative ({mean:.3e} W)", details={"power": mean}
            )
        return 0.0
    return mean
