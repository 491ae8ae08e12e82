"""Uplink sessions in acknowledged/unacknowledged mode, cost models and sweeps."""
from __future__ import annotations

import csv
import enum
import io
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .channel import DEFAULT_TABLE, BlerOracle, LinkParams, ResourceTable, check_snr, lattice
from .errors import ConfigError, EmptyCandidates, LinkAdaptationError, NonTermination
from .strategies import StrategyKind, Verdict, make_strategy

TRACE_HEADER = ["block_idx", "attempt", "itbs", "nr", "bler_est", "cum_rus", "cum_success"]
SWEEP_HEADER = ["snr_db", "strategy", "metric", "mean", "std"]
TRADEOFF_HEADER = ["snr_db", "mode", "loss_pct", "rus", "itbs", "nr"]
METRICS = ("losses_pct", "total_rus", "performance", "retransmissions")


class Mode(enum.Enum):
    UNACK = "unack"
    ACK = "ack"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, cls):
            return value
        aliases = {"unacknowledged": "unack", "acknowledged": "ack"}
        try:
            return cls(aliases.get(value, value))
        except ValueError:
            raise ConfigError(f"unknown mode {value!r}") from None


@dataclass(frozen=True)
class SessionConfig:
    tbs: int = 256
    n_blocks: int = 500
    true_snr: float = -24.0
    snr_noise_std: float = 0.0
    # "session": one SNR estimate per connection; "block": one per decision
    snr_cadence: str = "session"
    mode: str = "unack"
    # None means unbounded, guarded by safety_cap attempts per block
    max_retransmissions: Optional[int] = None
    safety_cap: int = 64
    harq_discount: float = 0.5
    bler_t: float = 0.05
    tolerance: Optional[float] = None
    strategy: str = "itbs-nr"
    window: int = 20
    min_samples: int = 5
    itbs_max: int = 3
    fixed_nr: int = 128
    start_itbs: Optional[int] = None
    start_nr: int = 1
    seed: int = 0

    def validate(self) -> "SessionConfig":
        if self.n_blocks < 1:
            raise ConfigError("n_blocks must be >= 1")
        if not 0.0 < self.harq_discount <= 1.0:
            raise ConfigError("harq_discount must lie in (0, 1]")
        if not 0.0 < self.bler_t <= 1.0:
            raise ConfigError("bler_t must lie in (0, 1]")
        if self.snr_noise_std < 0:
            raise ConfigError("snr_noise_std must be >= 0")
        if self.snr_cadence not in ("session", "block"):
            raise ConfigError(f"snr_cadence must be 'session' or 'block', got {self.snr_cadence!r}")
        if self.max_retransmissions is not None and self.max_retransmissions < 0:
            raise ConfigError("max_retransmissions must be >= 0")
        if self.safety_cap < 1:
            raise ConfigError("safety_cap must be >= 1")
        try:
            check_snr(self.true_snr)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        Mode.parse(self.mode)
        StrategyKind.parse(self.strategy)
        return self

    @property
    def start(self) -> LinkParams:
        itbs = self.itbs_max // 2 if self.start_itbs is None else self.start_itbs
        return LinkParams(itbs, self.start_nr)


@dataclass(frozen=True)
class TraceRecord:
    block_idx: int
    attempt: int
    itbs: int
    nr: int
    bler_est: Optional[float]
    cum_rus: int
    cum_success: int
    verdict: Optional[Verdict] = None


@dataclass
class SessionResult:
    n_blocks: int
    blocks_lost: int
    successes: int
    total_rus: int
    retransmissions: int
    performance: float
    trace: list[TraceRecord] = field(default_factory=list)

    @property
    def losses_pct(self) -> float:
        return 100.0 * self.blocks_lost / self.n_blocks

    def param_changes(self) -> int:
        """Number of times (itbs, nr) changed between consecutive transmissions."""
        tuples = [(r.itbs, r.nr) for r in self.trace]
        return sum(a != b for a, b in zip(tuples, tuples[1:]))

    def trace_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for r in self.trace:
            est = "" if r.bler_est is None else repr(r.bler_est)
            writer.writerow([r.block_idx, r.attempt, r.itbs, r.nr, est, r.cum_rus, r.cum_success])
        return buf.getvalue()


def load_trace(text: str) -> list[TraceRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != TRACE_HEADER:
        raise ValueError(f"bad trace header {reader.fieldnames}")
    return [
        TraceRecord(int(r["block_idx"]), int(r["attempt"]), int(r["itbs"]), int(r["nr"]),
                    None if r["bler_est"] == "" else float(r["bler_est"]),
                    int(r["cum_rus"]), int(r["cum_success"]))
        for r in reader
    ]


def expected_ru_cost(rus_per_tx: float, bler_seq: Sequence[float], n_max: int) -> float:
    """Expected RUs when attempt i fails with probability ``bler_seq[i]``.

    Sums (i + 1) * P(first success at attempt i) over the first ``n_max``
    attempts; blocks failing every attempt contribute nothing.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if len(bler_seq) < n_max:
        raise ValueError(f"need {n_max} BLER values, got {len(bler_seq)}")
    total = 0.0
    all_failed = 1.0
    for i in range(n_max):
        b = bler_seq[i]
        if not 0.0 <= b <= 1.0:
            raise ValueError(f"bler {b} outside [0, 1]")
        total += (i + 1) * all_failed * (1.0 - b)
        all_failed *= b
    return rus_per_tx * total


def harq_bler_sequence(bler0: float, harq_discount: float, n: int) -> list[float]:
    return [bler0 * harq_discount ** k for k in range(n)]


def performance(bler: float, total_rus: float) -> float:
    """(1 - bler)^2 / total_rus."""
    if total_rus <= 0:
        raise ConfigError("performance undefined for total_rus <= 0")
    return (1.0 - bler) ** 2 / total_rus


def estimate_snr(true_snr: float, snr_noise_std: float, rng) -> float:
    if snr_noise_std < 0:
        raise ValueError("snr_noise_std must be >= 0")
    if snr_noise_std == 0:
        return float(true_snr)
    return float(true_snr + rng.normal(0.0, snr_noise_std))


class _Uniforms:
    """Buffered uniform draws; far cheaper than one Generator call per block."""

    def __init__(self, rng, chunk: int = 4096):
        self.rng = rng
        self.chunk = chunk
        self.buf = rng.random(chunk).tolist()
        self.pos = 0

    def __call__(self) -> float:
        if self.pos == self.chunk:
            self.buf = self.rng.random(self.chunk).tolist()
            self.pos = 0
        u = self.buf[self.pos]
        self.pos += 1
        return u


def run_session(cfg: SessionConfig, oracle: BlerOracle, lut=None, table: ResourceTable = DEFAULT_TABLE,
                record_trace: bool = True) -> SessionResult:
    """Run one connection until the UE buffer of ``cfg.n_blocks`` blocks is sent."""
    cfg.validate()
    mode = Mode.parse(cfg.mode)
    kind = StrategyKind.parse(cfg.strategy)
    if kind is StrategyKind.LUTS and lut is None:
        raise ConfigError("the luts strategy needs a LUT")
    ack = mode is Mode.ACK
    if ack and cfg.max_retransmissions is not None:
        attempt_limit, guarded = cfg.max_retransmissions + 1, False
    else:
        attempt_limit, guarded = cfg.safety_cap, ack

    rng = np.random.default_rng(cfg.seed)
    # SNR noise gets its own stream so block draws line up across strategies
    snr_rng = np.random.default_rng([cfg.seed, 1])
    uniform = _Uniforms(rng)
    strategy = make_strategy(kind, cfg.bler_t, cfg.itbs_max, cfg.tolerance, cfg.window,
                             cfg.min_samples, cfg.start, cfg.fixed_nr, lut)
    snr_est = estimate_snr(cfg.true_snr, cfg.snr_noise_std, snr_rng)
    per_block_snr = cfg.snr_cadence == "block" and cfg.snr_noise_std > 0

    bler_cache: dict[LinkParams, float] = {}
    rus_cache: dict[LinkParams, int] = {}
    tbs = cfg.tbs
    discount = cfg.harq_discount
    trace = []
    cum_rus = successes = lost = retx = 0

    for block in range(cfg.n_blocks):
        attempt = 0
        while True:
            if per_block_snr:
                snr_est = estimate_snr(cfg.true_snr, cfg.snr_noise_std, snr_rng)
            params, verdict = strategy.decide(tbs, snr_est)
            bler = bler_cache.get(params)
            if bler is None:
                bler = bler_cache[params] = oracle.bler(tbs, cfg.true_snr, params)
                rus_cache[params] = table.total_rus(tbs, params)
            if attempt:
                bler *= discount ** attempt
            failed = uniform() < bler
            cum_rus += rus_cache[params]
            strategy.observe(failed)
            if not failed:
                successes += 1
            if record_trace:
                trace.append(TraceRecord(block, attempt, params.itbs, params.nr,
                                         strategy.estimator.estimate, cum_rus, successes, verdict))
            if not failed:
                break
            if not ack:
                lost += 1
                break
            attempt += 1
            if attempt >= attempt_limit:
                if guarded:
                    raise NonTermination(
                        f"block {block} still failing after {attempt} attempts (safety cap)")
                lost += 1
                break
            retx += 1

    loss_rate = lost / cfg.n_blocks
    return SessionResult(cfg.n_blocks, lost, successes, cum_rus, retx,
                         performance(loss_rate, cum_rus), trace)


def realization_seed(base_seed: int, r: int) -> int:
    """Seed of realization ``r``; independent of cell and execution order."""
    return int(np.random.SeedSequence([base_seed, r]).generate_state(1)[0])


@dataclass(frozen=True)
class CellStats:
    mean: float
    std: float


@dataclass
class SweepResult:
    realizations: int
    # (snr, strategy) -> metric -> stats
    cells: dict[tuple[float, str], dict[str, CellStats]]

    def stat(self, snr: float, strategy: str, metric: str) -> CellStats:
        return self.cells[(float(snr), StrategyKind.parse(strategy).value)][metric]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        for (snr, strategy), metrics in sorted(self.cells.items()):
            for metric in METRICS:
                s = metrics[metric]
                writer.writerow([repr(snr), strategy, metric, repr(s.mean), repr(s.std)])
        return buf.getvalue()


def load_sweep(text: str) -> dict[tuple[float, str, str], CellStats]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != SWEEP_HEADER:
        raise ValueError(f"bad sweep header {reader.fieldnames}")
    return {
        (float(r["snr_db"]), r["strategy"], r["metric"]): CellStats(float(r["mean"]), float(r["std"]))
        for r in reader
    }


def _session_metrics(result: SessionResult) -> dict[str, float]:
    return {
        "losses_pct": result.losses_pct,
        "total_rus": float(result.total_rus),
        "performance": result.performance,
        "retransmissions": float(result.retransmissions),
    }


def aggregate(records: Iterable[tuple[float, str, int, dict[str, float]]], realizations: int) -> SweepResult:
    """Mean/std per cell from (snr, strategy, r, metrics) records in any order."""
    grouped: dict[tuple[float, str], dict[int, dict[str, float]]] = {}
    for snr, strategy, r, metrics in records:
        grouped.setdefault((float(snr), strategy), {})[r] = metrics
    cells = {}
    for cell, by_r in grouped.items():
        if sorted(by_r) != list(range(realizations)):
            raise ValueError(f"cell {cell} has realizations {sorted(by_r)}")
        cells[cell] = {}
        for metric in METRICS:
            values = np.array([by_r[r][metric] for r in range(realizations)])
            cells[cell][metric] = CellStats(float(values.mean()), float(values.std()))
    return SweepResult(realizations, cells)


def _run_cell(args):
    base_cfg, snr, strategy, realizations, oracle, lut, table = args
    out = []
    for r in range(realizations):
        cfg = replace(base_cfg, true_snr=snr, strategy=strategy, seed=realization_seed(base_cfg.seed, r))
        try:
            result = run_session(cfg, oracle, lut, table, record_trace=False)
        except LinkAdaptationError as exc:
            raise type(exc)(f"cell snr={snr} strategy={strategy} realization={r}: {exc}") from exc
        out.append((snr, strategy, r, _session_metrics(result)))
    return out


def run_sweep(base_cfg: SessionConfig, snr_list: Iterable[float], strategy_list: Iterable[str],
              realizations: int, oracle: BlerOracle, lut=None, table: ResourceTable = DEFAULT_TABLE,
              jobs: int = 1) -> SweepResult:
    """``realizations`` seeded sessions for every (snr, strategy) cell.

    Realization r uses the same seed in every cell, so strategies are
    compared on common random numbers.
    """
    if realizations < 1:
        raise ConfigError("realizations must be >= 1")
    base_cfg.validate()
    tasks = [
        (base_cfg, float(snr), StrategyKind.parse(s).value, realizations, oracle, lut, table)
        for snr, s in itertools.product(snr_list, strategy_list)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_cell, tasks))
    else:
        chunks = [_run_cell(t) for t in tasks]
    return aggregate(itertools.chain.from_iterable(chunks), realizations)


@dataclass(frozen=True)
class TradeoffPoint:
    snr: float
    mode: str
    loss_pct: float
    rus: Optional[float]
    params: Optional[LinkParams]

    @property
    def reachable(self) -> bool:
        return self.rus is not None


DEFAULT_LOSS_GRID = tuple(float(x) for x in range(0, 31))


def tradeoff_curve(oracle: BlerOracle, tbs: int, snr_list: Iterable[float],
                   loss_grid: Iterable[float] = DEFAULT_LOSS_GRID, mode: str = "unack",
                   table: ResourceTable = DEFAULT_TABLE, itbs_max: Optional[int] = None,
                   harq_discount: float = 0.5, max_attempts: int = 64,
                   loss_tolerance: float = 1e-4) -> list[TradeoffPoint]:
    """Cheapest RU cost reaching each block-loss level.

    A tuple qualifies for loss level L% when its first-attempt BLER is at
    most L/100 + ``loss_tolerance``. Cost is RUs per transmission in
    unacknowledged mode and the expected HARQ cost in acknowledged mode.
    """
    mode = Mode.parse(mode)
    if itbs_max is None:
        itbs_max = table.itbs_max
    loss_grid = sorted(float(x) for x in loss_grid)
    points = []
    for snr in snr_list:
        costs = []
        for p in lattice(itbs_max):
            bler = oracle.bler(tbs, snr, p)
            rus = table.total_rus(tbs, p)
            if mode is Mode.ACK:
                cost = expected_ru_cost(rus, harq_bler_sequence(bler, harq_discount, max_attempts), max_attempts)
            else:
                cost = float(rus)
            costs.append((bler, cost, p))
        for loss in loss_grid:
            ok = [(cost, p.nr, p.itbs, p) for bler, cost, p in costs if bler <= loss / 100.0 + loss_tolerance]
            if ok:
                cost, _, _, p = min(ok)
                points.append(TradeoffPoint(float(snr), mode.value, loss, cost, p))
            else:
                points.append(TradeoffPoint(float(snr), mode.value, loss, None, None))
    return points


def tradeoff_csv(points: Iterable[TradeoffPoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRADEOFF_HEADER)
    for pt in points:
        if pt.reachable:
            writer.writerow([repr(pt.snr), pt.mode, repr(pt.loss_pct), repr(pt.rus), pt.params.itbs, pt.params.nr])
        else:
            writer.writerow([repr(pt.snr), pt.mode, repr(pt.loss_pct), "unreachable", "", ""])
    return buf.getvalue()


def load_tradeoff(text: str) -> list[TradeoffPoint]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != TRADEOFF_HEADER:
        raise ValueError(f"bad tradeoff header {reader.fieldnames}")
    out = []
    for r in reader:
        if r["rus"] == "unreachable":
            out.append(TradeoffPoint(float(r["snr_db"]), r["mode"], float(r["loss_pct"]), None, None))
        else:
            out.append(TradeoffPoint(float(r["snr_db"]), r["mode"], float(r["loss_pct"]), float(r["rus"]),
                                     LinkParams(int(r["itbs"]), int(r["nr"]))))
    return out


def session_config_dict(cfg: SessionConfig) -> dict:
    return asdict(cfg)


def ru_drop_share(points: Sequence[TradeoffPoint], lo: float = 0.0, hi: float = 5.0) -> float:
    """Fraction of the curve's total RU drop that happens between ``lo`` and ``hi`` percent."""
    reach = [p for p in sorted(points, key=lambda p: p.loss_pct) if p.reachable]
    if not reach:
        raise EmptyCandidates("curve has no reachable points")
    total = reach[0].rus - reach[-1].rus
    if total == 0:
        return 1.0
    at = {p.loss_pct: p.rus for p in reach}
    start = at.get(lo, reach[0].rus)
    end = at[max(x for x in at if x <= hi)]
    return (start - end) / total


def is_nonincreasing(values: Sequence[float]) -> bool:
    return all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


