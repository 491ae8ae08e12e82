"""Resource tables, RU arithmetic and the BLER oracles standing in for the PHY.

The payload table is the single sub-carrier NPUSCH extract (I_TBS 0..3).
Block error rates come from a pluggable oracle: either a grid loaded from
CSV or a logistic curve in effective SNR.
"""
from __future__ import annotations

import bisect
import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol

from .errors import MissingGridRow, ParseError, TbsTooLarge, UnknownCell

NR_VALUES = (1, 2, 4, 8, 16, 32, 64, 128)
RU_SLOTS = (1, 2, 3, 4, 5, 6, 8, 10)

# dB gained per doubling of the repetition count
REPETITION_GAIN_DB = 10.0 * math.log10(2.0)

# rows are I_TBS 0..3, columns follow RU_SLOTS
_PAYLOAD_ROWS = {
    0: (16, 32, 56, 88, 120, 152, 208, 256),
    1: (24, 56, 88, 144, 176, 208, 256, 344),
    2: (32, 72, 144, 176, 208, 256, 328, 424),
    3: (40, 104, 176, 208, 256, 328, 440, 568),
}
_MCS_OF_ITBS = {0: 0, 1: 2, 2: 1, 3: 3}


class Outcome(enum.Enum):
    SUCCESS = "success"
    FAILURE = "failure"


@dataclass(frozen=True, order=True)
class LinkParams:
    """Scheduled (I_TBS, NR) tuple for one transmission."""

    itbs: int
    nr: int

    def __post_init__(self):
        if self.nr not in NR_VALUES:
            raise ValueError(f"nr must be a power of two in [1, 128], got {self.nr}")
        if self.itbs < 0:
            raise ValueError(f"itbs must be non-negative, got {self.itbs}")

    def check(self, itbs_max: int) -> "LinkParams":
        if self.itbs > itbs_max:
            raise ValueError(f"itbs {self.itbs} above itbs_max {itbs_max}")
        return self

    def __str__(self):
        return f"({self.itbs},{self.nr})"


def lattice(itbs_max: int = 3) -> list[LinkParams]:
    """Every schedulable tuple, itbs-major."""
    return [LinkParams(i, n) for i in range(itbs_max + 1) for n in NR_VALUES]


def check_snr(snr: float) -> float:
    snr = float(snr)
    if not math.isfinite(snr):
        raise ValueError(f"SNR must be finite, got {snr}")
    return snr


@dataclass(frozen=True)
class ResourceTable:
    """Payload map (itbs, ru_slot_count) -> TBS bits plus the MCS/I_TBS bijection."""

    payload: Mapping[tuple[int, int], int]
    mcs_of_itbs: Mapping[int, int] = field(default_factory=lambda: dict(_MCS_OF_ITBS))

    @classmethod
    def default(cls) -> "ResourceTable":
        payload = {
            (itbs, ru): bits
            for itbs, row in _PAYLOAD_ROWS.items()
            for ru, bits in zip(RU_SLOTS, row)
        }
        return cls(payload)

    @classmethod
    def from_csv(cls, path) -> "ResourceTable":
        """Load an override table with header ``itbs,ru_slots,tbs_bits``.

        MCS indices for I_TBS rows beyond the compiled-in four are taken
        equal to the I_TBS.
        """
        payload = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["itbs", "ru_slots", "tbs_bits"]:
                raise ParseError(f"bad header {reader.fieldnames}", line=1)
            for lineno, row in enumerate(reader, start=2):
                try:
                    key = (int(row["itbs"]), int(row["ru_slots"]))
                    payload[key] = int(row["tbs_bits"])
                except (TypeError, ValueError) as exc:
                    raise ParseError(str(exc), line=lineno) from None
                if key[1] not in RU_SLOTS:
                    raise ParseError(f"ru_slots {key[1]} not in {RU_SLOTS}", line=lineno)
        itbs_rows = sorted({i for i, _ in payload})
        mcs = {i: _MCS_OF_ITBS.get(i, i) for i in itbs_rows}
        return cls(payload, mcs)

    @property
    def itbs_max(self) -> int:
        return max(i for i, _ in self.payload)

    def payload_bits(self, itbs: int, ru_slot_count: int) -> int:
        try:
            return self.payload[(itbs, ru_slot_count)]
        except KeyError:
            raise UnknownCell((itbs, ru_slot_count)) from None

    def rus_no_rep(self, tbs: int, itbs: int) -> int:
        """Smallest RU count whose payload at ``itbs`` fits ``tbs`` bits."""
        for ru in RU_SLOTS:
            if self.payload_bits(itbs, ru) >= tbs:
                return ru
        raise TbsTooLarge(
            f"tbs {tbs} exceeds max payload {self.payload_bits(itbs, RU_SLOTS[-1])} at itbs {itbs}"
        )

    def total_rus(self, tbs: int, params: LinkParams) -> int:
        return self.rus_no_rep(tbs, params.itbs) * params.nr


DEFAULT_TABLE = ResourceTable.default()


class BlerOracle(Protocol):
    def bler(self, tbs: int, snr: float, params: LinkParams) -> float: ...


@dataclass(frozen=True)
class SyntheticAwgn:
    """Logistic BLER curve in effective SNR.

    effective_snr = snr + 10*log10(nr) - itbs_penalty_db * itbs, and
    bler = 1 / (1 + exp(slope * (effective_snr - snr50_db))).

    Defaults are a least-squares logit fit to the four finite-logit rows of
    the 256-bit / -24 dB LUT extract, so they reproduce its good/poor/bad
    labels. Only ``tbs_ref`` is modelled.
    """

    snr50_db: float = -5.1
    slope: float = 4.6
    itbs_penalty_db: float = 1.15
    tbs_ref: int = 256

    def __post_init__(self):
        if not self.slope > 0:
            raise ValueError("slope must be positive")
        if not self.itbs_penalty_db > 0:
            raise ValueError("itbs_penalty_db must be positive")

    def effective_snr(self, snr: float, params: LinkParams) -> float:
        reps = params.nr.bit_length() - 1
        return snr + REPETITION_GAIN_DB * reps - self.itbs_penalty_db * params.itbs

    def bler(self, tbs: int, snr: float, params: LinkParams) -> float:
        if tbs != self.tbs_ref:
            raise MissingGridRow(f"synthetic oracle only models tbs={self.tbs_ref}, got {tbs}")
        x = self.slope * (self.effective_snr(snr, params) - self.snr50_db)
        if x >= 0:
            e = math.exp(-x)
            return e / (1.0 + e)
        return 1.0 / (1.0 + math.exp(x))

    __call__ = bler


class TabulatedBler:
    """BLER curves sampled on an SNR grid, keyed by (tbs, itbs, nr).

    Lookups snap the SNR down to the grid (pessimistic). Below the lowest
    sampled SNR of a curve the block is assumed lost.
    """

    def __init__(self, grid: Mapping[tuple[int, float, int, int], float], snr_step_db: float = 1.0):
        if not snr_step_db > 0:
            raise ValueError("snr_step_db must be positive")
        self.snr_step_db = float(snr_step_db)
        self._curves: dict[tuple[int, int, int], tuple[list[float], list[float]]] = {}
        points: dict[tuple[int, int, int], dict[float, float]] = {}
        for (tbs, snr, itbs, nr), value in grid.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"bler {value} outside [0, 1]")
            points.setdefault((tbs, itbs, nr), {})[float(snr)] = float(value)
        for key, curve in points.items():
            snrs = sorted(curve)
            self._curves[key] = (snrs, [curve[s] for s in snrs])

    @property
    def grid(self) -> dict[tuple[int, float, int, int], float]:
        return {
            (tbs, s, itbs, nr): b
            for (tbs, itbs, nr), (snrs, blers) in self._curves.items()
            for s, b in zip(snrs, blers)
        }

    def quantize(self, snr: float) -> float:
        return quantize_snr(snr, self.snr_step_db)

    def has_curve(self, tbs: int, params: LinkParams) -> bool:
        return (tbs, params.itbs, params.nr) in self._curves

    def bler(self, tbs: int, snr: float, params: LinkParams) -> float:
        try:
            snrs, blers = self._curves[(tbs, params.itbs, params.nr)]
        except KeyError:
            raise MissingGridRow((tbs, params.itbs, params.nr)) from None
        idx = bisect.bisect_right(snrs, self.quantize(snr) + 1e-9) - 1
        if idx < 0:
            return 1.0
        return blers[idx]

    __call__ = bler

    @classmethod
    def from_csv(cls, path, snr_step_db: float = 1.0) -> "TabulatedBler":
        """Read a grid file with header ``tbs,snr_db,itbs,nr,bler``."""
        grid = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["tbs", "snr_db", "itbs", "nr", "bler"]:
                raise ParseError(f"bad header {reader.fieldnames}", line=1)
            for lineno, row in enumerate(reader, start=2):
                try:
                    key = (int(row["tbs"]), float(row["snr_db"]), int(row["itbs"]), int(row["nr"]))
                    value = float(row["bler"])
                except (TypeError, ValueError) as exc:
                    raise ParseError(str(exc), line=lineno) from None
                if not 0.0 <= value <= 1.0:
                    raise ParseError(f"bler {value} outside [0, 1]", line=lineno)
                grid[key] = value
        return cls(grid, snr_step_db)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["tbs", "snr_db", "itbs", "nr", "bler"])
            for (tbs, snr, itbs, nr), b in sorted(self.grid.items()):
                writer.writerow([tbs, repr(snr), itbs, nr, repr(b)])


def quantize_snr(snr: float, step_db: float) -> float:
    """Snap down to the nearest multiple of ``step_db``."""
    q = math.floor(snr / step_db + 1e-6) * step_db
    # keep grid values free of float noise such as -23.999999999999996
    return round(q, 9) + 0.0


def tabulate(oracle: BlerOracle, tbs: int, snrs: Iterable[float], itbs_max: int = 3,
             snr_step_db: float = 1.0) -> TabulatedBler:
    """Sample any oracle onto a grid."""
    grid = {
        (tbs, float(s), p.itbs, p.nr): oracle.bler(tbs, s, p)
        for s in snrs
        for p in lattice(itbs_max)
    }
    return TabulatedBler(grid, snr_step_db)


# (itbs, nr) -> bler at 256 bits, -24 dB
EXTRACT_POINTS = {
    (0, 128): 0.00006,
    (1, 128): 0.00491,
    (2, 128): 0.70477,
    (0, 64): 0.98001,
    (0, 1): 1.0,
}


def extract_oracle(itbs_max: int = 3) -> TabulatedBler:
    """Tabulated oracle at (256 bits, -24 dB) built from the five LUT-extract rows.

    Lattice points missing from the extract get the tightest pessimistic
    value monotonicity allows: the minimum BLER among known tuples that are
    no more robust (itbs' >= itbs and nr' <= nr), or 1 if there is none.
    """
    grid = {}
    for p in lattice(itbs_max):
        value = EXTRACT_POINTS.get((p.itbs, p.nr))
        if value is None:
            worse = [b for (i, n), b in EXTRACT_POINTS.items() if i >= p.itbs and n <= p.nr]
            value = min(worse, default=1.0)
        grid[(256, -24.0, p.itbs, p.nr)] = value
    return TabulatedBler(grid, 1.0)


def draw_block_outcome(bler: float, rng) -> Outcome:
    """Bernoulli block error with probability ``bler``; ``rng`` is a numpy Generator."""
    if not 0.0 <= bler <= 1.0:
        raise ValueError(f"bler {bler} outside [0, 1]")
    return Outcome.FAILURE if rng.random() < bler else Outcome.SUCCESS


def grid_path(name: str) -> Path:
    return Path(__file__).parent / "data" / name
