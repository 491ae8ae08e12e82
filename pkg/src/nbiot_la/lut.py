"""Lookup table mapping (TBS, quantized SNR, target BLER) to the cheapest tuple."""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .channel import (
    DEFAULT_TABLE,
    BlerOracle,
    LinkParams,
    ResourceTable,
    lattice,
    quantize_snr,
)
from .errors import (
    EmptyCandidates,
    MissingKey,
    NoFeasibleRow,
    NonConvergence,
    ParseError,
)

LUT_HEADER = ["tbs", "snr_db", "bler_t", "qos", "itbs", "nr", "rus"]

GOOD_MAX = 0.05
POOR_MAX = 0.9


class QosBand(enum.Enum):
    GOOD = "good"
    POOR = "poor"
    BAD = "bad"

    @property
    def bler_upper_bound(self) -> float:
        return {QosBand.GOOD: GOOD_MAX, QosBand.POOR: POOR_MAX, QosBand.BAD: 1.0}[self]


def classify_qos(bler: float, good_max: float = GOOD_MAX, poor_max: float = POOR_MAX) -> QosBand:
    if not 0.0 <= bler <= 1.0:
        raise ValueError(f"bler {bler} outside [0, 1]")
    if bler <= good_max:
        return QosBand.GOOD
    if bler <= poor_max:
        return QosBand.POOR
    return QosBand.BAD


@dataclass(frozen=True, order=True)
class LutKey:
    tbs: int
    snr_q: float
    bler_t: float

    def __post_init__(self):
        if not 0.0 < self.bler_t <= 1.0:
            raise ValueError(f"bler_t {self.bler_t} outside (0, 1]")


@dataclass(frozen=True)
class LutEntry:
    itbs: int
    nr: int
    bler: float
    rus: int

    @property
    def params(self) -> LinkParams:
        return LinkParams(self.itbs, self.nr)


def candidates(oracle: BlerOracle, tbs: int, snr: float, bler_t: float,
               itbs_max: int = 3) -> set[LinkParams]:
    """All lattice tuples whose BLER does not exceed ``bler_t``."""
    found = {p for p in lattice(itbs_max) if oracle.bler(tbs, snr, p) <= bler_t}
    if not found:
        raise EmptyCandidates(f"target BLER {bler_t} can't be achieved at tbs={tbs}, snr={snr}")
    return found


def _rank(entry: LutEntry) -> tuple:
    # ties on RUs go to fewer repetitions, then to the lower itbs
    return (entry.rus, entry.nr, entry.itbs)


def brute_force_optimal(oracle: BlerOracle, tbs: int, snr: float, bler_t: float,
                        table: ResourceTable = DEFAULT_TABLE, itbs_max: int | None = None) -> LutEntry:
    if itbs_max is None:
        itbs_max = table.itbs_max
    entries = [
        LutEntry(p.itbs, p.nr, oracle.bler(tbs, snr, p), table.total_rus(tbs, p))
        for p in candidates(oracle, tbs, snr, bler_t, itbs_max)
    ]
    return min(entries, key=_rank)


class Lut:
    """Rows keyed by :class:`LutKey`; one entry per key."""

    def __init__(self, snr_step_db: float = 1.0, table: ResourceTable = DEFAULT_TABLE):
        if not snr_step_db > 0:
            raise ValueError("snr_step_db must be positive")
        self.snr_step_db = float(snr_step_db)
        self.table = table
        self.rows: dict[LutKey, LutEntry] = {}

    def __len__(self):
        return len(self.rows)

    def __iter__(self) -> Iterator[tuple[LutKey, LutEntry]]:
        return iter(sorted(self.rows.items()))

    def __eq__(self, other):
        if not isinstance(other, Lut):
            return NotImplemented
        return self.snr_step_db == other.snr_step_db and self.rows == other.rows

    def key(self, tbs: int, snr: float, bler_t: float) -> LutKey:
        return LutKey(tbs, quantize_snr(snr, self.snr_step_db), bler_t)

    def row_exists(self, key: LutKey) -> bool:
        return key in self.rows

    def get_tuple(self, key: LutKey) -> LutEntry:
        try:
            return self.rows[key]
        except KeyError:
            raise MissingKey(key) from None

    def set_row(self, key: LutKey, entry: LutEntry, force: bool = False) -> bool:
        """Insert, or replace only if the new entry is strictly cheaper.

        Equal-RU entries are ordered by the same tie-break as
        :func:`brute_force_optimal`, so the stored RUs never increase and
        repeated offers settle on the exhaustive-search answer.
        Returns True when the table changed.
        """
        expected = self.table.total_rus(key.tbs, entry.params)
        if entry.rus != expected:
            raise ValueError(f"entry rus {entry.rus} != total_rus {expected} for {key}")
        if entry.bler > key.bler_t:
            raise ValueError(f"entry bler {entry.bler} above key target {key.bler_t}")
        if quantize_snr(key.snr_q, self.snr_step_db) != key.snr_q:
            raise ValueError(f"snr {key.snr_q} not on the {self.snr_step_db} dB grid")
        old = self.rows.get(key)
        if old is None or force or _rank(entry) < _rank(old):
            self.rows[key] = entry
            return True
        return False

    def get_closest_min_ru(self, tbs: int, snr_est: float, bler_t: float) -> LutKey:
        """Approximation policy: cheapest stored row at or below both the SNR and the target.

        Equal-RU rows resolve to the highest SNR, then fewer repetitions.
        """
        best = None
        best_rank = None
        for key, entry in self.rows.items():
            if key.tbs != tbs or key.snr_q > snr_est + 1e-9 or entry.bler > bler_t:
                continue
            rank = (entry.rus, -key.snr_q, entry.nr, entry.itbs, key.bler_t)
            if best_rank is None or rank < best_rank:
                best, best_rank = key, rank
        if best is None:
            raise NoFeasibleRow(f"no row for tbs={tbs} with snr<={snr_est} and bler<={bler_t}")
        return best

    def lookup(self, tbs: int, snr_est: float, bler_t: float) -> LutEntry:
        return self.get_tuple(self.get_closest_min_ru(tbs, snr_est, bler_t))

    def is_complete(self, oracle: BlerOracle, keys: Iterable[LutKey] | None = None) -> bool:
        keys = self.rows.keys() if keys is None else keys
        for key in keys:
            if key not in self.rows:
                return False
            best = brute_force_optimal(oracle, key.tbs, key.snr_q, key.bler_t, self.table)
            if _rank(self.rows[key]) != _rank(best):
                return False
        return True

    def dumps(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(LUT_HEADER + ["bler"])
        for key, entry in self:
            writer.writerow([
                key.tbs, _fmt(key.snr_q), _fmt(key.bler_t), classify_qos(key.bler_t).value,
                entry.itbs, entry.nr, entry.rus, _fmt(entry.bler),
            ])
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str, snr_step_db: float = 1.0, table: ResourceTable = DEFAULT_TABLE) -> "Lut":
        """Parse LUT CSV.

        The trailing ``bler`` column is optional; without it the row's
        achieved BLER is taken to be its ``bler_t``, as in a plain extract.
        """
        lut = cls(snr_step_db, table)
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header not in (LUT_HEADER, LUT_HEADER + ["bler"]):
            raise ParseError(f"bad header {header}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
            rec = dict(zip(header, row))
            try:
                key = LutKey(int(rec["tbs"]), float(rec["snr_db"]), _prob(rec["bler_t"]))
                bler = _prob(rec["bler"]) if "bler" in rec else key.bler_t
                entry = LutEntry(int(rec["itbs"]), int(rec["nr"]), bler, int(rec["rus"]))
                QosBand(rec["qos"])
                if key in lut.rows:
                    raise ValueError(f"duplicate key {key}")
                lut.set_row(key, entry)
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
        return lut

    @classmethod
    def load(cls, path, snr_step_db: float = 1.0, table: ResourceTable = DEFAULT_TABLE) -> "Lut":
        with open(path, newline="") as fh:
            return cls.loads(fh.read(), snr_step_db, table)


def _prob(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0 or math.isnan(value):
        raise ValueError(f"probability {text!r} outside [0, 1]")
    return value


def _fmt(x: float) -> str:
    return repr(float(x))


def build_lut(oracle: BlerOracle, tbs_list: Iterable[int], snr_grid: Iterable[float],
              bler_targets: Iterable[float], snr_step_db: float = 1.0,
              table: ResourceTable = DEFAULT_TABLE) -> tuple[Lut, list[LutKey]]:
    """Pre-calculated LUT by exhaustive search; also returns unreachable keys."""
    lut = Lut(snr_step_db, table)
    unreachable = []
    for tbs in tbs_list:
        for snr in snr_grid:
            for bler_t in bler_targets:
                key = lut.key(tbs, snr, bler_t)
                try:
                    lut.set_row(key, brute_force_optimal(oracle, tbs, key.snr_q, bler_t, table))
                except EmptyCandidates:
                    unreachable.append(key)
    return lut, unreachable


def initialize_exploratory(lut: Lut, oracle: BlerOracle, session_stream: Iterable[tuple[int, float, float]],
                           fallback: str = "itbs-nr", *, seed: int = 0, snr_noise_std: float = 0.0,
                           max_blocks: int = 500, target_keys: Iterable[LutKey] | None = None,
                           **strategy_opts) -> Lut:
    """Populate ``lut`` from simulated connections driven by an iterative strategy.

    Each connection ``(tbs, true_snr, bler_t)`` runs ``fallback`` from a random
    starting tuple until it emits its first verdict. The cheapest tuple it
    transmitted with whose BLER at the row's grid SNR meets ``bler_t`` is
    offered to :meth:`Lut.set_row`. With ``target_keys`` the loop stops once
    all of them hold their exhaustive-search optimum and raises
    :class:`NonConvergence` if the stream runs dry first.
    """
    from .strategies import Verdict, make_strategy

    rng = np.random.default_rng(seed)
    table = lut.table
    itbs_max = strategy_opts.pop("itbs_max", table.itbs_max)
    targets = None if target_keys is None else list(target_keys)
    optimum_cache: dict[LutKey, LutEntry] = {}

    def complete() -> bool:
        for key in targets:
            entry = lut.rows.get(key)
            if entry is None:
                return False
            if key not in optimum_cache:
                optimum_cache[key] = brute_force_optimal(oracle, key.tbs, key.snr_q, key.bler_t, table, itbs_max)
            if _rank(entry) != _rank(optimum_cache[key]):
                return False
        return True

    for tbs, true_snr, bler_t in session_stream:
        snr_est = true_snr + (rng.normal(0.0, snr_noise_std) if snr_noise_std > 0 else 0.0)
        key = lut.key(tbs, snr_est, bler_t)
        start = lattice(itbs_max)[rng.integers(0, 8 * (itbs_max + 1))]
        strategy = make_strategy(fallback, bler_t=bler_t, itbs_max=itbs_max, start=start, **strategy_opts)
        visited = set()
        for _ in range(max_blocks):
            params, verdict = strategy.decide(tbs, snr_est)
            visited.add(params)
            if verdict is not None and verdict is not Verdict.WARM_UP:
                break
            bler = oracle.bler(tbs, true_snr, params)
            strategy.observe(rng.random() < bler)
        else:
            raise NonConvergence(f"{fallback} gave no verdict within {max_blocks} blocks at snr={true_snr}")
        feasible = []
        for p in visited:
            bler = oracle.bler(tbs, key.snr_q, p)
            if bler <= bler_t:
                feasible.append(LutEntry(p.itbs, p.nr, bler, table.total_rus(tbs, p)))
        if feasible:
            lut.set_row(key, min(feasible, key=_rank))
        if targets is not None and complete():
            return lut
    if targets is not None and not complete():
        raise NonConvergence("session stream exhausted before every target row converged")
    return lut
