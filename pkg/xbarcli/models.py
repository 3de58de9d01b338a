"""
Shared data models for xbarcli.

These dataclasses are the canonical data shapes used across all modules:
design_space produces DesignPoints, netlist and circuit consume ConductanceTiles,
paa produces EvalResults, dse stores and ranks them.

Value types are frozen so they can be shared read-only across sweep workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from xbarcli.exceptions import ContractError, DesignError

BITCELL_ALIASES = {
    "1T1R": "1T1R",
    "ONET1R": "1T1R",
    "2T1R": "2T1R",
    "TWOT1R": "2T1R",
}

SOURCES = ("internal_solver", "paper_table", "external")


def canonical_bitcell(name: str) -> str:
    """Normalise '1t1r', 'OneT1R', '1T-1R' → '1T1R'."""
    key = name.replace("-", "").replace("_", "").upper()
    try:
        return BITCELL_ALIASES[key]
    except KeyError:
        raise DesignError(f"unknown bitcell {name!r}", details={"bitcell": name}) from None


@dataclass(frozen=True)
class DeviceKind:
    """A resistive memory technology characterised by its two resistance states."""

    name: str
    r_on: float  # ohms
    r_off: float  # ohms

    def __post_init__(self) -> None:
        if not (0 < self.r_on < self.r_off) or not math.isfinite(self.r_off):
            raise DesignError(
                f"device {self.name}: need 0 < r_on < r_off < inf, "
                f"got r_on={self.r_on}, r_off={self.r_off}"
            )

    @property
    def g_min(self) -> float:
        return 1.0 / self.r_off

    @property
    def g_max(self) -> float:
        return 1.0 / self.r_on


@dataclass(frozen=True)
class BitcellKind:
    """Access-transistor arrangement of one cell."""

    name: str
    access_resistance: float  # ohms per selected transistor
    switches: int = 1  # transistors in parallel
    cell_area_factor: float = 1.0

    def __post_init__(self) -> None:
        if self.access_resistance < 0:
            raise DesignError(f"bitcell {self.name}: access_resistance must be >= 0")
        if self.switches < 1:
            raise DesignError(f"bitcell {self.name}: switches must be >= 1")
        if self.cell_area_factor <= 0:
            raise DesignError(f"bitcell {self.name}: cell_area_factor must be positive")

    @property
    def effective_access_resistance(self) -> float:
        """Series resistance of all switches in parallel."""
        return self.access_resistance / self.switches


@dataclass(frozen=True)
class TechParams:
    """Interconnect parameters of one technology node."""

    nm: int
    wire_r: float  # ohms per segment
    wire_c_ff: float = 0.0  # fF per segment, annotation only

    def __post_init__(self) -> None:
        if self.nm <= 0:
            raise DesignError(f"tech node must be positive, got {self.nm}")
        if self.wire_r < 0:
            raise DesignError(f"tech {self.nm}nm: wire_r must be >= 0")


@dataclass(frozen=True, order=True)
class Mode:
    """Input/output resolution: analog, or digital with n bits (None = unspecified)."""

    kind: str  # "analog" | "digital"
    bits: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("analog", "digital"):
            raise DesignError(f"mode must be analog or digital, got {self.kind!r}")
        if self.kind == "analog" and self.bits is not None:
            raise DesignError("analog mode carries no bit count")
        if self.bits is not None and self.bits < 1:
            raise DesignError(f"digital bit count must be >= 1, got {self.bits}")

    @classmethod
    def analog(cls) -> Mode:
        return cls("analog")

    @classmethod
    def digital(cls, bits: int | None) -> Mode:
        return cls("digital", bits)

    @property
    def is_analog(self) -> bool:
        return self.kind == "analog"

    @property
    def token(self) -> str:
        """Key fragment: 'analog', 'd4', or 'dx' for unspecified bits."""
        if self.is_analog:
            return "analog"
        return f"d{self.bits}" if self.bits is not None else "dx"

    @classmethod
    def from_token(cls, token: str) -> Mode:
        token = token.lower()
        if token == "analog":
            return cls.analog()
        if token == "dx":
            return cls.digital(None)
        if token.startswith("d") and token[1:].isdigit():
            return cls.digital(int(token[1:]))
        raise DesignError(f"invalid mode token {token!r}")


@dataclass(frozen=True)
class DesignPoint:
    """One coordinate of the design-space grid."""

    tech: int  # nm
    device: str
    bitcell: str
    rows: int
    cols: int
    mode: Mode
    partition: tuple[int, int] = (1, 1)

    def __post_init__(self) -> None:
        object.__setattr__(self, "device", self.device.upper())
        object.__setattr__(self, "bitcell", canonical_bitcell(self.bitcell))
        object.__setattr__(self, "partition", tuple(self.partition))
        if self.tech <= 0:
            raise DesignError(f"tech node must be positive, got {self.tech}")
        if self.rows < 1 or self.cols < 1:
            raise DesignError(f"crossbar dims must be positive, got {self.rows}x{self.cols}")
        h, v = self.partition
        if h < 1 or v < 1:
            raise DesignError(f"partition counts must be positive, got {h}x{v}")
        if self.rows % h or self.cols % v:
            raise DesignError(
                f"{self.rows}x{self.cols} not divisible by partition {h}x{v}",
                details={"rows": self.rows, "cols": self.cols, "partition": [h, v]},
            )

    @property
    def size(self) -> float:
        """Geometric mean edge, equal to rows for square crossbars."""
        return math.sqrt(self.rows * self.cols)

    @property
    def tile_shape(self) -> tuple[int, int]:
        """Rows and columns of one partition sub-array."""
        return self.rows // self.partition[0], self.cols // self.partition[1]


@dataclass(frozen=True, eq=False)
class ConductanceTile:
    """Positive and negative conductance matrices of a differential array pair (siemens)."""

    g_pos: np.ndarray
    g_neg: np.ndarray

    def __post_init__(self) -> None:
        g_pos = np.asarray(self.g_pos, dtype=float)
        g_neg = np.asarray(self.g_neg, dtype=float)
        if g_pos.ndim != 2 or g_pos.shape != g_neg.shape:
            raise ContractError(
                f"g_pos {g_pos.shape} and g_neg {g_neg.shape} must be equal 2-D shapes"
            )
        object.__setattr__(self, "g_pos", g_pos)
        object.__setattr__(self, "g_neg", g_neg)

    @property
    def shape(self) -> tuple[int, int]:
        return self.g_pos.shape  # type: ignore[return-value]

    @property
    def rows(self) -> int:
        return self.g_pos.shape[0]

    @property
    def cols(self) -> int:
        return self.g_pos.shape[1]

    def polarity(self, name: str) -> np.ndarray:
        """Matrix for polarity 'p' or 'n'."""
        return self.g_pos if name == "p" else self.g_neg

    def submatrix(self, r0: int, r1: int, c0: int, c1: int) -> ConductanceTile:
        return ConductanceTile(self.g_pos[r0:r1, c0:c1], self.g_neg[r0:r1, c0:c1])


@dataclass
class EvalResult:
    """Power-area-accuracy triple for one design point, with provenance."""

    design: DesignPoint
    area_um2: float
    accuracy_pct: float
    avg_power_w: float
    n_images: int
    n_patterns: int = 0
    source: str = "internal_solver"
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.source not in SOURCES:
            raise DesignError(f"unknown result source {self.source!r}")
        if not 0.0 <= self.accuracy_pct <= 100.0:
            raise DesignError(f"accuracy must be within [0, 100], got {self.accuracy_pct}")
        if self.avg_power_w < 0:
            raise DesignError(f"power must be non-negative, got {self.avg_power_w}")
        if self.area_um2 <= 0:
            raise DesignError(f"area must be positive, got {self.area_um2}")

    def metric(self, name: str) -> float:
        """Numeric metric used by scoring: power, area, accuracy, tech, size."""
        if name == "power":
            return self.avg_power_w
        if name == "area":
            return self.area_um2
        if name == "accuracy":
            return self.accuracy_pct
        if name == "tech":
            return float(self.design.tech)
        if name == "size":
            return self.design.size
        raise KeyError(name)
