"""Design-space grid: device catalog, grid spec, enumeration and design keys.

Device, bitcell and interconnect constants come from ``data/devices.toml``;
the default grid from ``data/grid.toml``. Either file can be replaced through
``paths.devices`` / ``paths.grid`` in config.toml.

Design key format (lowercase, file-name safe):

    t{nm}_{device}_{bitcell}_{rows}x{cols}_{mode}_p{h}x{v}

e.g. ``t7_pcm_1t1r_64x64_analog_p1x1``. ``mode`` is ``analog``, ``d{n}`` or
``dx`` (digital, resolution unspecified).
"""

from __future__ import annotations

import itertools
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import toml

from xbarcli.exceptions import ConfigInvalidError, DesignError, EmptyAxisError
from xbarcli.models import BitcellKind, DesignPoint, DeviceKind, Mode, TechParams, canonical_bitcell

logger = logging.getLogger(__name__)

# ── Data files ────────────────────────────────────────────────────────────────
_DATA_DIR = Path(__file__).parent / "data"
DEFAULT_DEVICES_PATH = _DATA_DIR / "devices.toml"
DEFAULT_GRID_PATH = _DATA_DIR / "grid.toml"

_catalog_cache: dict[str, DeviceCatalog] = {}

_KEY_RE = re.compile(
    r"^t(?P<tech>\d+)_(?P<device>[a-z0-9]+)_(?P<bitcell>[12]t1r)_"
    r"(?P<rows>\d+)x(?P<cols>\d+)_(?P<mode>analog|d\d+|dx)_p(?P<h>\d+)x(?P<v>\d+)$"
)


# ── Catalog ───────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class DeviceCatalog:
    """Registered devices, bitcells and technology nodes."""

    devices: dict[str, DeviceKind]
    bitcells: dict[str, BitcellKind]
    techs: dict[int, TechParams]

    def device(self, name: str) -> DeviceKind:
        try:
            return self.devices[name.upper()]
        except KeyError:
            raise DesignError(
                f"unknown device {name!r}; registered: {sorted(self.devices)}",
                details={"device": name},
            ) from None

    def bitcell(self, name: str) -> BitcellKind:
        canonical = canonical_bitcell(name)
        try:
            return self.bitcells[canonical]
        except KeyError:
            raise DesignError(f"bitcell {name!r} not in catalog") from None

    def tech(self, nm: int) -> TechParams:
        try:
            return self.techs[int(nm)]
        except KeyError:
            raise DesignError(
                f"unknown tech node {nm}nm; registered: {sorted(self.techs)}",
                details={"tech": nm},
            ) from None

    def with_device(self, device: DeviceKind) -> DeviceCatalog:
        """Copy with one extra (or replaced) device."""
        devices = dict(self.devices)
        devices[device.name.upper()] = device
        return DeviceCatalog(devices, self.bitcells, self.techs)

    def with_wire_r(self, wire_r: float) -> DeviceCatalog:
        """Copy with every node's wire resistance overridden."""
        techs = {nm: TechParams(nm, wire_r, t.wire_c_ff) for nm, t in self.techs.items()}
        return DeviceCatalog(self.devices, self.bitcells, techs)


def load_catalog(path: str | Path | None = None) -> DeviceCatalog:
    """
    Load devices.toml (bundled when path is None or empty).

    Raises:
        ConfigInvalidError: on unreadable TOML or invalid constants.
    """
    resolved = Path(path).expanduser() if path else DEFAULT_DEVICES_PATH
    cache_key = str(resolved)
    if cache_key in _catalog_cache:
        return _catalog_cache[cache_key]

    raw = _load_toml(resolved)
    try:
        devices = {
            name.upper(): DeviceKind(name.upper(), float(d["r_on"]), float(d["r_off"]))
            for name, d in raw.get("devices", {}).items()
        }
        bitcells = {}
        for name, b in raw.get("bitcells", {}).items():
            canonical = canonical_bitcell(name)
            bitcells[canonical] = BitcellKind(
                canonical,
                float(b["access_resistance"]),
                int(b.get("switches", 1)),
                float(b.get("cell_area_factor", 1.0)),
            )
        techs = {
            int(nm): TechParams(int(nm), float(t["wire_r"]), float(t.get("wire_c_ff", 0.0)))
            for nm, t in raw.get("tech", {}).items()
        }
    except (KeyError, ValueError, TypeError, DesignError) as e:
        raise ConfigInvalidError(f"invalid device table {resolved}: {e}") from e

    if not devices or not bitcells or not techs:
        raise ConfigInvalidError(f"{resolved}: devices, bitcells and tech tables are all required")
    if "1T1R" in bitcells and "2T1R" in bitcells:
        if bitcells["2T1R"].cell_area_factor <= bitcells["1T1R"].cell_area_factor:
            raise ConfigInvalidError("2T1R cell_area_factor must exceed 1T1R's")

    catalog = DeviceCatalog(devices, bitcells, techs)
    _catalog_cache[cache_key] = catalog
    logger.debug("loaded catalog %s: %d devices, %d nodes", resolved, len(devices), len(techs))
    return catalog


# ── Grid ──────────────────────────────────────────────────────────────────────


@dataclass
class GridSpec:
    """Axis value lists; the grid is their Cartesian product."""

    techs: list[int] = field(default_factory=lambda: [7, 9, 14, 20])
    devices: list[str] = field(default_factory=lambda: ["MRAM", "RRAM", "PCM", "CBRAM"])
    bitcells: list[str] = field(default_factory=lambda: ["1T1R", "2T1R"])
    sizes: list[int] = field(default_factory=lambda: [16, 32, 64])
    modes: list[Mode] = field(
        default_factory=lambda: [Mode.digital(b) for b in (1, 2, 3, 4, 6, 8)] + [Mode.analog()]
    )
    partitions: list[tuple[int, int]] = field(default_factory=lambda: [(1, 1)])

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> GridSpec:
        try:
            modes = [Mode.digital(int(b)) for b in raw.get("bits", [])]
            if raw.get("analog", False):
                modes.append(Mode.analog())
            return cls(
                techs=[int(t) for t in raw.get("techs", [])],
                devices=[str(d).upper() for d in raw.get("devices", [])],
                bitcells=[canonical_bitcell(str(b)) for b in raw.get("bitcells", [])],
                sizes=[int(s) for s in raw.get("sizes", [])],
                modes=modes,
                partitions=[(int(p[0]), int(p[1])) for p in raw.get("partitions", [[1, 1]])],
            )
        except (ValueError, TypeError, IndexError, DesignError) as e:
            raise ConfigInvalidError(f"invalid grid spec: {e}") from e

    def cardinality(self) -> int:
        return (
            len(self.techs)
            * len(self.devices)
            * len(self.bitcells)
            * len(self.sizes)
            * len(self.modes)
            * len(self.partitions)
        )


def load_grid(path: str | Path | None = None) -> GridSpec:
    """Load grid.toml (bundled when path is None or empty)."""
    resolved = Path(path).expanduser() if path else DEFAULT_GRID_PATH
    return GridSpec.from_dict(_load_toml(resolved))


def enumerate_grid(grid: GridSpec, catalog: DeviceCatalog | None = None) -> list[DesignPoint]:
    """
    Cartesian product of the grid axes, sorted by design_key.

    Raises:
        EmptyAxisError: an axis has no values.
        DesignError: a value is not registered in the catalog or violates
            DesignPoint invariants (e.g. size not divisible by partition).
    """
    for axis in ("techs", "devices", "bitcells", "sizes", "modes", "partitions"):
        if not getattr(grid, axis):
            raise EmptyAxisError(axis)

    if catalog is not None:
        for nm in grid.techs:
            catalog.tech(nm)
        for name in grid.devices:
            catalog.device(name)
        for name in grid.bitcells:
            catalog.bitcell(name)

    points = {
        DesignPoint(tech, device, bitcell, size, size, mode, partition)
        for tech, device, bitcell, size, mode, partition in itertools.product(
            grid.techs, grid.devices, grid.bitcells, grid.sizes, grid.modes, grid.partitions
        )
    }
    return sorted(points, key=design_key)


def default_partition(rows: int, cols: int, max_rows: int, max_cols: int) -> tuple[int, int]:
    """Smallest (h, v) whose sub-arrays fit within max_rows x max_cols."""
    if max_rows < 1 or max_cols < 1:
        raise DesignError("partition limits must be positive")
    h = next(d for d in range(1, rows + 1) if rows % d == 0 and rows // d <= max_rows)
    v = next(d for d in range(1, cols + 1) if cols % d == 0 and cols // d <= max_cols)
    return h, v


# ── Keys ──────────────────────────────────────────────────────────────────────


def design_key(dp: DesignPoint) -> str:
    """Canonical identifier, e.g. 't7_pcm_1t1r_64x64_analog_p1x1'."""
    h, v = dp.partition
    return (
        f"t{dp.tech}_{dp.device.lower()}_{dp.bitcell.lower()}_"
        f"{dp.rows}x{dp.cols}_{dp.mode.token}_p{h}x{v}"
    )


def parse_key(key: str) -> DesignPoint:
    """Inverse of design_key."""
    m = _KEY_RE.match(key.strip().lower())
    if not m:
        raise DesignError(f"malformed design key {key!r}", details={"key": key})
    return DesignPoint(
        tech=int(m["tech"]),
        device=m["device"].upper(),
        bitcell=m["bitcell"].upper(),
        rows=int(m["rows"]),
        cols=int(m["cols"]),
        mode=Mode.from_token(m["mode"]),
        partition=(int(m["h"]), int(m["v"])),
    )


# ──────────────────────────────────────────────────────────────
# Private helpers
# ──────────────────────────────────────────────────────────────


def _load_toml(path: Path) -> dict[str, Any]:
    if not path.exists():
        raise ConfigInvalidError(f"file not found: {path}", details={"path": str(path)})
    try:
        return toml.load(str(path))
    except toml.TomlDecodeError as e:
        raise ConfigInvalidError(f"Invalid TOML in {path}: {e}") from e
