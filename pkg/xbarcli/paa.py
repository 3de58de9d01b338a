"""Power, area and accuracy of one design point.

Pipeline per layer of the MLP:

  1. Fold the bias in as an always-on last input row, then tile the
     (inputs + 1) x outputs matrix onto crossbar sub-arrays of dp.tile_shape
     by ceiling division; edge tiles are padded with zero weights.
  2. Map each tile to a conductance pair (map_weights_to_conductance) with
     its own w_max.
  3. Drive DAC levels of the layer input, read differential column currents
     (closed form or full nodal solve) and, in digital mode, quantize each
     partial current with the ADC over its full-scale range.
  4. Convert current to pre-activation with the per-tile affine scale
     w_max / (vdd * (g_max - g_min)), so a full-scale ideal column current
     maps to 1.0 per unit input. Partial sums are accumulated digitally.
  5. Apply the activation (hidden layers) or argmax (output layer).

Power is the sum over both polarity arrays, every tile and every layer,
averaged over images.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import astuple, dataclass, field

import numpy as np
from scipy.optimize import least_squares, linprog

from xbarcli.circuit import (
    DEFAULT_TOL,
    DIRECT_THRESHOLD,
    NodalSolver,
    build_system,
    dac_quantize,
    ideal_mac,
    ideal_power,
    pattern_to_sources,
)
from xbarcli.design_space import DeviceCatalog, design_key, load_catalog
from xbarcli.exceptions import (
    CalibrationError,
    CircuitError,
    ContractError,
    WeightsFormatError,
    XbarError,
)
from xbarcli.mnist import MnistDataset
from xbarcli.models import ConductanceTile, DesignPoint, DeviceKind, EvalResult, Mode
from xbarcli.netlist import GeneratorOptions, Netlist, generate_crossbar_netlist
from xbarcli.weights import DEFAULT_LAYER_DIMS, MlpWeights, activate

logger = logging.getLogger(__name__)

IDEAL_MAC = "ideal"
FULL_PARASITIC = "parasitic"
FIDELITIES = (IDEAL_MAC, FULL_PARASITIC)


# ── Conductance mapping ───────────────────────────────────────────────────────


def tile_w_max(w: np.ndarray) -> float:
    """max |w| over the tile, or 1 for an all-zero tile."""
    m = float(np.max(np.abs(w))) if w.size else 0.0
    return m if m > 0 else 1.0


def map_weights_to_conductance(
    w: np.ndarray, device: DeviceKind, n_levels: int | None = None
) -> ConductanceTile:
    """
    Differential mapping of a weight tile onto device conductances.

    Positive weights land on g_pos, negative magnitudes on g_neg, and the
    other polarity of each cell stays at 1/r_off. With n_levels, results are
    snapped to that many uniform levels across [1/r_off, 1/r_on].

    Raises:
        WeightsFormatError: non-finite weights.
        ContractError: n_levels < 2.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2:
        raise ContractError(f"weight tile must be 2-D, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise WeightsFormatError("weight tile contains non-finite entries")
    if n_levels is not None and n_levels < 2:
        raise ContractError(f"n_levels must be >= 2, got {n_levels}")

    t = np.abs(w) / tile_w_max(w)
    if n_levels is not None:
        t = np.round(t * (n_levels - 1)) / (n_levels - 1)
    g_lo, g_hi = device.g_min, device.g_max
    g = np.clip((1.0 - t) * g_lo + t * g_hi, g_lo, g_hi)
    g_pos = np.where(w > 0, g, g_lo)
    g_neg = np.where(w < 0, g, g_lo)
    return ConductanceTile(g_pos, g_neg)


# ── Area model ────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class AreaParams:
    """Parametric crossbar area model (µm²)."""

    cell_coeff: float  # µm² per F² per cell
    periph_fixed: float  # µm² per sub-array
    periph_per_row: float  # µm² per row line
    periph_per_col: float  # µm² per column line
    node_scaling_exponent: float

    def __post_init__(self) -> None:
        if any(v < 0 or not math.isfinite(v) for v in astuple(self)):
            raise CalibrationError(f"area parameters must be finite and non-negative: {self}")
        if self.cell_coeff <= 0:
            raise CalibrationError("cell_coeff must be positive")

    def to_dict(self) -> dict[str, float]:
        return {
            "cell_coeff": self.cell_coeff,
            "periph_fixed": self.periph_fixed,
            "periph_per_row": self.periph_per_row,
            "periph_per_col": self.periph_per_col,
            "node_scaling_exponent": self.node_scaling_exponent,
        }


# Hand fit to the embedded reference table; calibrate_area_model refines it.
DEFAULT_AREA_PARAMS = AreaParams(90.0, 0.0, 0.56, 0.56, 2.0)

_LOWER = [0.0, 0.0, 0.0, 0.0, 0.0]
_UPPER = [np.inf, np.inf, np.inf, np.inf, 4.0]
_X0 = [100.0, 1.0, 0.3, 0.3, 2.0]
# Exponents tried by the minimax refinement, one linear program each.
_EXPONENT_GRID = np.round(np.arange(0.0, 4.0 + 1e-9, 0.01), 2)
# A minimax fit must beat the least-squares worst case by this much to replace it.
_MINIMAX_MARGIN = 1e-6


def crossbar_count(layer_dims: Sequence[int], rows: int, cols: int) -> int:
    """Crossbars needed for the MLP, bias row included."""
    return sum(
        math.ceil((layer_dims[k] + 1) / rows) * math.ceil(layer_dims[k + 1] / cols)
        for k in range(len(layer_dims) - 1)
    )


def _features(
    dp: DesignPoint, layer_dims: Sequence[int] | None, catalog: DeviceCatalog
) -> tuple[float, float, float, float, float, float]:
    """(crossbars, 2*cells*factor, F_um, sub-arrays, row lines, column lines)."""
    h, v = dp.partition
    factor = catalog.bitcell(dp.bitcell).cell_area_factor
    tiles = 1 if layer_dims is None else crossbar_count(layer_dims, dp.rows, dp.cols)
    return (
        float(tiles),
        2.0 * dp.rows * dp.cols * factor,
        dp.tech / 1000.0,
        float(h * v),
        float(dp.rows * v),
        float(dp.cols * h),
    )


def _area(x: Sequence[float], f: tuple[float, ...]) -> float:
    tiles, cells, f_um, subs, row_lines, col_lines = f
    per_crossbar = (
        x[0] * cells * f_um ** x[4] + x[1] * subs + x[2] * row_lines + x[3] * col_lines
    )
    return tiles * per_crossbar


def _linear_terms(f: tuple[float, ...], exponent: float) -> np.ndarray:
    """Coefficients of (cell_coeff, periph_fixed, periph_per_row, periph_per_col)."""
    tiles, cells, f_um, subs, row_lines, col_lines = f
    return tiles * np.array([cells * f_um**exponent, subs, row_lines, col_lines])


def _minimax_fit(
    feats: Sequence[tuple[float, ...]], areas: np.ndarray
) -> tuple[np.ndarray, float] | None:
    """
    Parameters minimising the worst relative error, or None if no LP solved.

    For a fixed exponent the model is linear in the other four parameters, so
    min t s.t. |a_i·x / A_i - 1| <= t, x >= 0 is a linear program. The
    exponent is taken from _EXPONENT_GRID.
    """
    n = len(areas)
    ones = np.ones((n, 1))
    cost = np.zeros(5)
    cost[-1] = 1.0
    b_ub = np.concatenate([np.ones(n), -np.ones(n)])
    best: tuple[np.ndarray, float] | None = None
    for exponent in _EXPONENT_GRID:
        a = np.array([_linear_terms(f, exponent) for f in feats]) / areas[:, None]
        a_ub = np.vstack([np.hstack([a, -ones]), np.hstack([-a, -ones])])
        res = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=[(0.0, None)] * 5, method="highs")
        if res.status != 0 or res.x[0] <= 0:
            continue
        worst = float(res.x[-1])
        if best is None or worst < best[1]:
            best = (np.append(res.x[:4], exponent), worst)
    return best


def area_estimate(
    dp: DesignPoint,
    p: AreaParams = DEFAULT_AREA_PARAMS,
    layer_dims: Sequence[int] | None = None,
    catalog: DeviceCatalog | None = None,
) -> float:
    """
    Area in µm² of one crossbar pair, or of the whole mapped network when
    layer_dims is given.
    """
    return _area(astuple(p), _features(dp, layer_dims, catalog or load_catalog()))


def calibrate_area_model(
    reference: Sequence[tuple[DesignPoint, float]],
    layer_dims: Sequence[int] | None = DEFAULT_LAYER_DIMS,
    catalog: DeviceCatalog | None = None,
) -> AreaParams:
    """
    Bounded least squares on relative area errors, then a minimax refinement.

    The least-squares fit is exact on consistent data. A single inconsistent
    reference row can still leave a large worst-case error, so a minimax fit
    (one linear program per grid exponent) replaces it when it lowers the
    worst relative error.

    Deterministic: fixed starting point, data taken in the given order.

    Raises:
        CalibrationError: fewer rows than parameters ("underdetermined"), or
            all reference areas identical ("degenerate").
    """
    n_params = len(_X0)
    if len(reference) < n_params:
        raise CalibrationError(
            f"underdetermined: {len(reference)} reference rows for {n_params} parameters",
            details={"rows": len(reference), "parameters": n_params},
        )
    areas = np.array([float(a) for _, a in reference])
    if np.any(areas <= 0):
        raise CalibrationError("reference areas must be positive")
    if np.ptp(areas) == 0:
        raise CalibrationError("degenerate reference data: all areas identical")

    catalog = catalog or load_catalog()
    feats = [_features(dp, layer_dims, catalog) for dp, _ in reference]

    def residuals(x: np.ndarray) -> np.ndarray:
        return np.array([_area(x, f) for f in feats]) / areas - 1.0

    result = least_squares(
        residuals,
        np.array(_X0),
        bounds=(_LOWER, _UPPER),
        method="trf",
        x_scale="jac",
        ftol=1e-14,
        xtol=1e-14,
        gtol=1e-14,
        max_nfev=20000,
    )
    x = np.maximum(result.x, 0.0)
    worst = float(np.max(np.abs(residuals(x))))
    logger.info(
        "area calibration: cost=%.3e nfev=%d worst=%.4f", result.cost, result.nfev, worst
    )

    minimax = _minimax_fit(feats, areas)
    if minimax is not None and minimax[1] < worst - _MINIMAX_MARGIN:
        logger.info("area calibration: minimax refinement worst=%.4f", minimax[1])
        x = np.maximum(minimax[0], 0.0)
    return AreaParams(*(float(v) for v in x))


def area_residuals(
    reference: Sequence[tuple[DesignPoint, float]],
    params: AreaParams,
    layer_dims: Sequence[int] | None = DEFAULT_LAYER_DIMS,
    catalog: DeviceCatalog | None = None,
) -> list[float]:
    """Relative error (model - reference) / reference per row."""
    catalog = catalog or load_catalog()
    return [
        area_estimate(dp, params, layer_dims, catalog) / float(area) - 1.0
        for dp, area in reference
    ]


# ── Inference ─────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class QuantSpec:
    """Resolution of weights (conductance levels), DAC and ADC. None = continuous."""

    weight_levels: int | None = None
    dac_bits: int | None = None
    adc_bits: int | None = None

    @classmethod
    def from_mode(cls, mode: Mode) -> QuantSpec:
        if mode.is_analog or mode.bits is None:
            return cls()
        return cls(1 << mode.bits, mode.bits, mode.bits)


@dataclass
class _Tile:
    layer: int
    index: int
    r0: int
    r1: int
    c0: int
    c1: int
    conductance: ConductanceTile
    scale: float  # amperes → pre-activation units per volt-normalised input
    full_scale: float  # amperes
    solver: NodalSolver | None = None
    netlist: Netlist | None = None


def adc_quantize(current: np.ndarray, full_scale: float, n_bits: int) -> np.ndarray:
    """Nearest of 2^n uniform levels across [-full_scale, full_scale]."""
    step = 2.0 * full_scale / ((1 << n_bits) - 1)
    clipped = np.clip(current, -full_scale, full_scale)
    return -full_scale + np.round((clipped + full_scale) / step) * step


@dataclass
class MappedNetwork:
    """Weights mapped onto crossbar tiles for one design point."""

    dp: DesignPoint
    weights: MlpWeights
    fidelity: str = IDEAL_MAC
    catalog: DeviceCatalog | None = None
    vdd: float = 1.0
    wire_r: float | None = None
    quant: QuantSpec | None = None
    tol: float = DEFAULT_TOL
    direct_threshold: int = DIRECT_THRESHOLD
    tiles: list[list[_Tile]] = field(default_factory=list, init=False)

    def __post_init__(self) -> None:
        if self.fidelity not in FIDELITIES:
            raise ContractError(f"fidelity must be one of {FIDELITIES}, got {self.fidelity!r}")
        self.catalog = self.catalog or load_catalog()
        if self.quant is None:
            self.quant = QuantSpec.from_mode(self.dp.mode)
        device = self.catalog.device(self.dp.device)
        delta_g = device.g_max - device.g_min
        tr, tc = self.dp.tile_shape
        tile_dp = DesignPoint(
            self.dp.tech, self.dp.device, self.dp.bitcell, tr, tc, self.dp.mode, (1, 1)
        )
        opts = GeneratorOptions(self.wire_r, self.vdd, None, self.catalog)

        for k in range(self.weights.n_layers):
            w_aug = self.weights.augmented(k)
            n_in, n_out = w_aug.shape
            layer: list[_Tile] = []
            for r0 in range(0, n_in, tr):
                for c0 in range(0, n_out, tc):
                    r1, c1 = min(r0 + tr, n_in), min(c0 + tc, n_out)
                    block = np.zeros((tr, tc))
                    block[: r1 - r0, : c1 - c0] = w_aug[r0:r1, c0:c1]
                    conductance = map_weights_to_conductance(
                        block, device, self.quant.weight_levels
                    )
                    tile = _Tile(
                        k,
                        len(layer),
                        r0,
                        r1,
                        c0,
                        c1,
                        conductance,
                        tile_w_max(block) / (self.vdd * delta_g),
                        self.vdd * delta_g * tr,
                    )
                    if self.fidelity == FULL_PARASITIC:
                        netlist = generate_crossbar_netlist(tile_dp, conductance, opts)
                        tile.solver = self._solver(netlist, k, tile.index)
                        tile.netlist = netlist
                    layer.append(tile)
            self.tiles.append(layer)
        logger.debug(
            "mapped %s onto %d tiles (%s)",
            design_key(self.dp),
            sum(len(t) for t in self.tiles),
            self.fidelity,
        )

    def _solver(self, netlist: Netlist, layer: int, index: int) -> NodalSolver:
        try:
            return NodalSolver(
                build_system(netlist),
                tol=self.tol,
                direct_threshold=self.direct_threshold,
            )
        except CircuitError as e:
            e.details.update({"layer": layer, "tile": index})
            raise

    @property
    def tile_count(self) -> int:
        return sum(len(layer) for layer in self.tiles)

    def forward(self, image: Sequence[float] | np.ndarray) -> tuple[int, np.ndarray, float]:
        """Returns (predicted class, output pre-activations, power in watts)."""
        assert self.quant is not None
        a = np.asarray(image, dtype=float)
        if a.shape != (self.weights.layer_dims[0],):
            raise ContractError(f"image length {a.size} != {self.weights.layer_dims[0]}")
        tr, _ = self.dp.tile_shape
        power = 0.0
        z = a
        for k, layer in enumerate(self.tiles):
            x = np.append(a, 1.0)
            v = np.asarray(dac_quantize(np.clip(x, 0.0, 1.0), self.quant.dac_bits, self.vdd))
            z = np.zeros(self.weights.layer_dims[k + 1])
            for tile in layer:
                v_tile = np.zeros(tr)
                v_tile[: tile.r1 - tile.r0] = v[tile.r0 : tile.r1]
                currents, p = self._tile_currents(tile, v_tile)
                if self.quant.adc_bits is not None:
                    currents = adc_quantize(currents, tile.full_scale, self.quant.adc_bits)
                z[tile.c0 : tile.c1] += currents[: tile.c1 - tile.c0] * tile.scale
                power += p
            a = z if k == len(self.tiles) - 1 else activate(z, self.weights.activation)
        return int(np.argmax(z)), z, power

    def _tile_currents(self, tile: _Tile, v_tile: np.ndarray) -> tuple[np.ndarray, float]:
        if tile.solver is None or tile.netlist is None:
            return ideal_mac(v_tile, tile.conductance), ideal_power(v_tile, tile.conductance)
        try:
            report = tile.solver.solve(pattern_to_sources(tile.netlist, v_tile))
        except CircuitError as e:
            e.details.update({"layer": tile.layer, "tile": tile.index})
            e.message = f"layer {tile.layer} tile {tile.index}: {e.message}"
            raise
        return report.column_currents, report.power


def infer_analog(
    dp: DesignPoint,
    w: MlpWeights,
    image: Sequence[float] | np.ndarray,
    fidelity: str = IDEAL_MAC,
    **kwargs: object,
) -> int:
    """Predicted class of one image on the analog pipeline."""
    network = MappedNetwork(dp, w, fidelity, **kwargs)  # type: ignore[arg-type]
    return network.forward(image)[0]


def evaluate_design(
    dp: DesignPoint,
    w: MlpWeights,
    images: MnistDataset,
    params: AreaParams = DEFAULT_AREA_PARAMS,
    fidelity: str = IDEAL_MAC,
    catalog: DeviceCatalog | None = None,
    vdd: float = 1.0,
    wire_r: float | None = None,
    quant: QuantSpec | None = None,
    tol: float = DEFAULT_TOL,
) -> EvalResult:
    """
    Accuracy, average power and area of dp over an image slice.

    Raises:
        ContractError: empty slice.
        XbarError: member failures, with the design key in details.
    """
    key = design_key(dp)
    n = len(images)
    if n == 0:
        raise ContractError("evaluate_design needs a non-empty image slice", {"design": key})
    try:
        network = MappedNetwork(dp, w, fidelity, catalog, vdd, wire_r, quant, tol)
        correct = 0
        power = 0.0
        for image, label in zip(images.images, images.labels, strict=True):
            pred, _, p = network.forward(image)
            correct += int(pred == int(label))
            power += p
        area = area_estimate(dp, params, w.layer_dims, network.catalog)
    except XbarError as e:
        e.details.setdefault("design", key)
        raise
    return EvalResult(
        design=dp,
        area_um2=area,
        accuracy_pct=100.0 * correct / n,
        avg_power_w=power / n,
        n_images=n,
        n_patterns=n,
        source="internal_solver",
        meta={"fidelity": fidelity, "activation": w.activation, "tiles": str(network.tile_count)},
    )
