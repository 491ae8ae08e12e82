"""The six (I_TBS, NR) selection strategies and the windowed BLER estimator."""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, replace
from typing import Optional, Union

from .channel import NR_VALUES, LinkParams
from .errors import ConfigError, NoFeasibleRow


class StrategyKind(enum.Enum):
    ITBS_NR = "itbs-nr"
    NR_ITBS = "nr-itbs"
    ITBS_ONLY = "itbs"
    NR_ONLY = "nr"
    ITBS_AND_NR = "itbs+nr"
    LUTS = "luts"

    @classmethod
    def parse(cls, name) -> "StrategyKind":
        if isinstance(name, cls):
            return name
        try:
            return cls(name)
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ConfigError(f"unknown strategy {name!r}; choose from {names}") from None


class Verdict(enum.Enum):
    IN_RANGE = "in-range"
    TARGET_UNREACHABLE = "target-unreachable"
    FLOOR_REACHED = "floor-reached"
    WARM_UP = "warm-up"


@dataclass(frozen=True)
class Bounds:
    itbs_max: int = 3
    itbs_min: int = 0
    nr_min: int = 1
    nr_max: int = 128

    def __post_init__(self):
        if not 0 <= self.itbs_min <= self.itbs_max:
            raise ConfigError(f"bad itbs bounds [{self.itbs_min}, {self.itbs_max}]")
        if self.nr_min not in NR_VALUES or self.nr_max not in NR_VALUES or self.nr_min > self.nr_max:
            raise ConfigError(f"bad nr bounds [{self.nr_min}, {self.nr_max}]")


@dataclass(frozen=True)
class DecisionContext:
    current: LinkParams
    bler_t: float
    tbs: int = 256
    bler_est: Optional[float] = None
    snr_est: Optional[float] = None
    tolerance: Optional[float] = None

    @property
    def eps(self) -> float:
        return self.bler_t / 2 if self.tolerance is None else self.tolerance

    def direction(self) -> int:
        """+1 when the estimate is above the band, -1 below, 0 inside."""
        if self.bler_est > self.bler_t + self.eps:
            return 1
        if self.bler_est < self.bler_t - self.eps:
            return -1
        return 0


Decision = Union[LinkParams, Verdict]
DEFAULT_BOUNDS = Bounds()


def next_link_params_itbs_nr(ctx: DecisionContext, bounds: Bounds = DEFAULT_BOUNDS) -> Decision:
    """Coding first, repetitions only once I_TBS is exhausted."""
    itbs, nr = ctx.current.itbs, ctx.current.nr
    step = ctx.direction()
    if step > 0:
        if itbs > bounds.itbs_min:
            return LinkParams(itbs - 1, nr)
        if nr < bounds.nr_max:
            return LinkParams(itbs, nr * 2)
        return Verdict.TARGET_UNREACHABLE
    if step < 0:
        if itbs < bounds.itbs_max:
            return LinkParams(itbs + 1, nr)
        if nr > bounds.nr_min:
            return LinkParams(itbs, nr // 2)
        return Verdict.FLOOR_REACHED
    return Verdict.IN_RANGE


def next_link_params_nr_itbs(ctx: DecisionContext, bounds: Bounds = DEFAULT_BOUNDS) -> Decision:
    itbs, nr = ctx.current.itbs, ctx.current.nr
    step = ctx.direction()
    if step > 0:
        if nr < bounds.nr_max:
            return LinkParams(itbs, nr * 2)
        if itbs > bounds.itbs_min:
            return LinkParams(itbs - 1, nr)
        return Verdict.TARGET_UNREACHABLE
    if step < 0:
        if nr > bounds.nr_min:
            return LinkParams(itbs, nr // 2)
        if itbs < bounds.itbs_max:
            return LinkParams(itbs + 1, nr)
        return Verdict.FLOOR_REACHED
    return Verdict.IN_RANGE


def pinned_itbs(bounds: Bounds) -> int:
    return bounds.itbs_max // 2


def next_link_params_single_axis(ctx: DecisionContext, axis: StrategyKind, bounds: Bounds = DEFAULT_BOUNDS,
                                 fixed_nr: int = 128) -> Decision:
    """Move along one axis only; the other stays pinned."""
    axis = StrategyKind.parse(axis)
    step = ctx.direction()
    if axis is StrategyKind.ITBS_ONLY:
        itbs = ctx.current.itbs
        if step > 0:
            return LinkParams(itbs - 1, fixed_nr) if itbs > bounds.itbs_min else Verdict.TARGET_UNREACHABLE
        if step < 0:
            return LinkParams(itbs + 1, fixed_nr) if itbs < bounds.itbs_max else Verdict.FLOOR_REACHED
        return Verdict.IN_RANGE
    if axis is StrategyKind.NR_ONLY:
        nr = ctx.current.nr
        itbs = pinned_itbs(bounds)
        if step > 0:
            return LinkParams(itbs, nr * 2) if nr < bounds.nr_max else Verdict.TARGET_UNREACHABLE
        if step < 0:
            return LinkParams(itbs, nr // 2) if nr > bounds.nr_min else Verdict.FLOOR_REACHED
        return Verdict.IN_RANGE
    raise ConfigError(f"{axis.value} is not a single-axis strategy")


def next_link_params_itbs_and_nr(ctx: DecisionContext, bounds: Bounds = DEFAULT_BOUNDS) -> Decision:
    """Both axes move together, each clamped at its own bound."""
    itbs, nr = ctx.current.itbs, ctx.current.nr
    step = ctx.direction()
    if step > 0:
        new = LinkParams(max(itbs - 1, bounds.itbs_min), min(nr * 2, bounds.nr_max))
        return Verdict.TARGET_UNREACHABLE if new == ctx.current else new
    if step < 0:
        new = LinkParams(min(itbs + 1, bounds.itbs_max), max(nr // 2, bounds.nr_min))
        return Verdict.FLOOR_REACHED if new == ctx.current else new
    return Verdict.IN_RANGE


def next_link_params_luts(ctx: DecisionContext, lut) -> Decision:
    try:
        return lut.lookup(ctx.tbs, ctx.snr_est, ctx.bler_t).params
    except NoFeasibleRow:
        return Verdict.TARGET_UNREACHABLE


class BlerEstimator:
    """Erroneous/total ratio over the last ``window`` blocks."""

    def __init__(self, window: int = 20, min_samples: int = 5):
        if window < 1 or not 1 <= min_samples <= window:
            raise ConfigError(f"need 1 <= min_samples <= window, got {min_samples}, {window}")
        self.window = window
        self.min_samples = min_samples
        self._ring: deque[bool] = deque(maxlen=window)
        self._failures = 0

    def update(self, failed: bool) -> "BlerEstimator":
        if len(self._ring) == self.window:
            self._failures -= self._ring[0]
        self._ring.append(bool(failed))
        self._failures += bool(failed)
        return self

    @property
    def count(self) -> int:
        return len(self._ring)

    @property
    def estimate(self) -> Optional[float]:
        n = len(self._ring)
        if n < self.min_samples:
            return None
        return self._failures / n


class Strategy:
    """Per-session decision state: current tuple plus the BLER estimator.

    ``decide`` returns the tuple for the next transmission and the verdict
    reached, or ``None`` as verdict when the tuple changed.
    """

    def __init__(self, kind: StrategyKind, bler_t: float, bounds: Bounds = DEFAULT_BOUNDS,
                 tolerance: Optional[float] = None, window: int = 20, min_samples: int = 5,
                 start: Optional[LinkParams] = None, fixed_nr: int = 128, lut=None):
        self.kind = StrategyKind.parse(kind)
        if not 0.0 < bler_t <= 1.0:
            raise ConfigError(f"bler_t {bler_t} outside (0, 1]")
        if self.kind is StrategyKind.LUTS and lut is None:
            raise ConfigError("the luts strategy needs a LUT")
        self.bler_t = bler_t
        self.bounds = bounds
        self.tolerance = tolerance
        self.fixed_nr = fixed_nr
        self.lut = lut
        self.estimator = BlerEstimator(window, min_samples)
        if start is None:
            start = LinkParams(pinned_itbs(bounds), 1)
        if self.kind is StrategyKind.ITBS_ONLY:
            start = LinkParams(start.itbs, fixed_nr)
        elif self.kind is StrategyKind.NR_ONLY:
            start = LinkParams(pinned_itbs(bounds), start.nr)
        self.current = start.check(bounds.itbs_max)
        self._luts_cache = None

    def _step(self, ctx: DecisionContext) -> Decision:
        kind = self.kind
        if kind is StrategyKind.ITBS_NR:
            return next_link_params_itbs_nr(ctx, self.bounds)
        if kind is StrategyKind.NR_ITBS:
            return next_link_params_nr_itbs(ctx, self.bounds)
        if kind is StrategyKind.ITBS_AND_NR:
            return next_link_params_itbs_and_nr(ctx, self.bounds)
        return next_link_params_single_axis(ctx, kind, self.bounds, self.fixed_nr)

    def decide(self, tbs: int, snr_est: Optional[float] = None) -> tuple[LinkParams, Optional[Verdict]]:
        if self.kind is StrategyKind.LUTS:
            if snr_est is None:
                raise ConfigError("the luts strategy needs an SNR estimate")
            # the LUT is frozen during a session; reuse the answer for a repeated query
            if self._luts_cache is not None and self._luts_cache[0] == (tbs, snr_est):
                out = self._luts_cache[1]
            else:
                ctx = DecisionContext(self.current, self.bler_t, tbs, snr_est=snr_est)
                out = next_link_params_luts(ctx, self.lut)
                self._luts_cache = ((tbs, snr_est), out)
        else:
            est = self.estimator.estimate
            if est is None:
                return self.current, Verdict.WARM_UP
            ctx = DecisionContext(self.current, self.bler_t, tbs, bler_est=est, tolerance=self.tolerance)
            out = self._step(ctx)
        if isinstance(out, Verdict):
            return self.current, out
        if out == self.current:
            return out, Verdict.IN_RANGE
        self.current = out
        return out, None

    def observe(self, failed: bool) -> None:
        self.estimator.update(failed)


def make_strategy(kind, bler_t: float = 0.05, itbs_max: int = 3, tolerance: Optional[float] = None,
                  window: int = 20, min_samples: int = 5, start: Optional[LinkParams] = None,
                  fixed_nr: int = 128, lut=None) -> Strategy:
    return Strategy(kind, bler_t, replace(DEFAULT_BOUNDS, itbs_max=itbs_max), tolerance,
                    window, min_samples, start, fixed_nr, lut)
