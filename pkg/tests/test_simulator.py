import itertools
import math
import random
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nbiot_la.channel import DEFAULT_TABLE, LinkParams, quantize_snr
from nbiot_la.errors import ConfigError, NonTermination
from nbiot_la.lut import build_lut
from nbiot_la.simulator import (
    SessionConfig,
    aggregate,
    estimate_snr,
    expected_ru_cost,
    is_nonincreasing,
    load_sweep,
    load_trace,
    load_tradeoff,
    performance,
    realization_seed,
    ru_drop_share,
    run_session,
    run_sweep,
    tradeoff_csv,
    tradeoff_curve,
)

ALL = ["itbs-nr", "nr-itbs", "itbs", "nr", "itbs+nr", "luts"]


class ConstOracle:
    def __init__(self, value):
        self.value = value

    def bler(self, tbs, snr, params):
        return self.value


def enumerate_cost(rus, seq, n):
    """Sum over every success/failure pattern of length n."""
    total = 0.0
    for pattern in itertools.product([False, True], repeat=n):
        prob = 1.0
        for b, ok in zip(seq, pattern):
            prob *= (1 - b) if ok else b
        first = next((i for i, ok in enumerate(pattern) if ok), None)
        if first is not None:
            total += prob * (first + 1) * rus
    return total


def test_expected_cost_zero_bler():
    for n in (1, 5, 64):
        assert expected_ru_cost(10, [0.0] * n, n) == 10


def test_expected_cost_half():
    assert expected_ru_cost(10, [0.5] * 4, 4) == pytest.approx(16.25, abs=1e-12)
    assert enumerate_cost(10, [0.5] * 4, 4) == pytest.approx(16.25, abs=1e-12)


def test_expected_cost_limit():
    assert expected_ru_cost(10, [0.5] * 64, 64) == pytest.approx(20.0, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 1280), st.lists(st.floats(0, 1), min_size=1, max_size=8))
def test_expected_cost_matches_enumeration(rus, seq):
    n = len(seq)
    assert expected_ru_cost(rus, seq, n) == pytest.approx(enumerate_cost(rus, seq, n), rel=1e-12, abs=1e-9)


def test_expected_cost_monte_carlo():
    rng = np.random.default_rng(4)
    rus, p, n = 8, 0.3, 6
    trials = 200_000
    fails = rng.random((trials, n)) < p
    first = np.argmax(~fails, axis=1)
    success = (~fails).any(axis=1)
    mc = float(np.where(success, (first + 1) * rus, 0).mean())
    assert mc == pytest.approx(expected_ru_cost(rus, [p] * n, n), rel=0.01)


def test_expected_cost_rejects_short_sequence():
    with pytest.raises(ValueError):
        expected_ru_cost(10, [0.1], 3)


def test_performance_examples():
    assert performance(0.0, 10) == 0.1
    assert performance(1.0, 1280) == 0.0
    assert performance(0.05, 1024) == 0.00088134765625
    with pytest.raises(ConfigError):
        performance(0.0, 0)


def test_estimate_snr_exact_without_noise():
    assert estimate_snr(-24.0, 0.0, np.random.default_rng(0)) == -24.0


def test_estimate_snr_std():
    rng = np.random.default_rng(9)
    draws = np.array([estimate_snr(-20.0, 0.5, rng) for _ in range(100_000)])
    assert abs(draws.std() - 0.5) <= 0.01


def cell_hit_probability(std, step=1.0, n=2000):
    # average over the true SNR position of P(noise keeps the estimate in the cell)
    phi = lambda x: 0.5 * (1 + math.erf(x / math.sqrt(2)))
    us = [(i + 0.5) / n * step for i in range(n)]
    return sum(phi((step - u) / std) - phi(-u / std) for u in us) / n


def test_estimate_snr_stays_in_cell():
    exact = cell_hit_probability(0.4)
    assert exact >= 0.65
    rng = np.random.default_rng(11)
    hits = 0
    n = 50_000
    for _ in range(n):
        true = -24.0 + 8 * rng.random()
        hits += quantize_snr(estimate_snr(true, 0.4, rng), 1.0) == quantize_snr(true, 1.0)
    assert hits / n >= 0.65
    assert hits / n == pytest.approx(exact, abs=0.01)


@pytest.mark.parametrize("strategy", ALL)
def test_noiseless_channel(strategy):
    zero = ConstOracle(0.0)
    lut, _ = build_lut(zero, [256], [-24.0], [0.05])
    cfg = SessionConfig(n_blocks=20, strategy=strategy, start_itbs=3, start_nr=1)
    res = run_session(cfg, zero, lut)
    assert res.blocks_lost == 0
    final = LinkParams(res.trace[-1].itbs, res.trace[-1].nr)
    assert res.total_rus == 20 * DEFAULT_TABLE.total_rus(256, final)


@pytest.mark.parametrize("strategy", ALL)
def test_ru_accounting_matches_trace(strategy, synth, full_lut):
    res = run_session(SessionConfig(strategy=strategy, n_blocks=100, true_snr=-20.0, seed=3), synth, full_lut)
    assert res.total_rus == sum(DEFAULT_TABLE.total_rus(256, LinkParams(r.itbs, r.nr)) for r in res.trace)
    assert res.successes + res.blocks_lost == 100
    assert len(res.trace) == 100


def test_luts_one_step(ext_oracle, ext_lut):
    res = run_session(SessionConfig(strategy="luts", n_blocks=50), ext_oracle, ext_lut)
    assert {(r.itbs, r.nr) for r in res.trace} == {(1, 128)}


def test_itbs_nr_walks(synth):
    res = run_session(SessionConfig(strategy="itbs-nr", n_blocks=60), synth)
    assert len({(r.itbs, r.nr) for r in res.trace}) >= 2


def test_session_determinism(synth, full_lut):
    cfg = SessionConfig(strategy="itbs-nr", n_blocks=200, true_snr=-24.0, snr_noise_std=0.4, seed=7)
    a = run_session(cfg, synth, full_lut)
    b = run_session(cfg, synth, full_lut)
    assert a.trace_csv() == b.trace_csv()
    c = run_session(replace(cfg, seed=8), synth, full_lut)
    assert c.trace_csv() != a.trace_csv()


def test_trace_roundtrip(synth):
    res = run_session(SessionConfig(n_blocks=30, mode="ack"), synth)
    records = load_trace(res.trace_csv())
    assert [(r.itbs, r.nr, r.cum_rus) for r in records] == [(r.itbs, r.nr, r.cum_rus) for r in res.trace]


@pytest.mark.parametrize("strategy", ALL)
def test_ack_unbounded_has_no_losses(strategy, synth, full_lut):
    res = run_session(SessionConfig(strategy=strategy, mode="ack", n_blocks=200, true_snr=-24.0), synth, full_lut)
    assert res.blocks_lost == 0
    assert res.successes == 200


def test_ack_bounded_abandons_blocks():
    res = run_session(SessionConfig(mode="ack", n_blocks=10, max_retransmissions=2, harq_discount=1.0,
                                    strategy="itbs", start_itbs=0), ConstOracle(1.0))
    assert res.blocks_lost == 10
    assert res.retransmissions == 20
    assert len(res.trace) == 30


def test_ack_unbounded_guard():
    cfg = SessionConfig(mode="ack", n_blocks=5, harq_discount=1.0)
    with pytest.raises(NonTermination):
        run_session(cfg, ConstOracle(1.0))


def test_unack_counts_each_failure_as_loss():
    res = run_session(SessionConfig(n_blocks=40, strategy="itbs", start_itbs=0), ConstOracle(1.0))
    assert res.blocks_lost == 40
    assert res.retransmissions == 0
    assert res.performance == 0.0


def test_config_validation():
    with pytest.raises(ConfigError):
        SessionConfig(mode="sometimes").validate()
    with pytest.raises(ConfigError):
        SessionConfig(n_blocks=0).validate()
    with pytest.raises(ConfigError):
        run_session(SessionConfig(strategy="luts"), ConstOracle(0.0))


def test_sweep_single_realization(synth, full_lut):
    res = run_sweep(SessionConfig(n_blocks=50), [-24.0, -20.0], ALL, 1, synth, full_lut)
    for metrics in res.cells.values():
        assert all(s.std == 0.0 for s in metrics.values())


def test_sweep_roundtrip_and_parallel(synth, full_lut):
    base = SessionConfig(n_blocks=50, seed=4)
    serial = run_sweep(base, [-24.0, -16.0], ["itbs-nr", "luts"], 4, synth, full_lut)
    parallel = run_sweep(base, [-24.0, -16.0], ["itbs-nr", "luts"], 4, synth, full_lut, jobs=2)
    assert serial.to_csv() == parallel.to_csv()
    loaded = load_sweep(serial.to_csv())
    assert loaded[(-24.0, "luts", "total_rus")] == serial.stat(-24.0, "luts", "total_rus")


def test_aggregate_order_insensitive():
    rng = random.Random(0)
    records = [
        (snr, s, r, {"losses_pct": rng.random(), "total_rus": rng.random(),
                     "performance": rng.random(), "retransmissions": rng.random()})
        for snr in (-24.0, -20.0) for s in ("itbs", "luts") for r in range(5)
    ]
    a = aggregate(records, 5)
    rng.shuffle(records)
    assert aggregate(records, 5).to_csv() == a.to_csv()
    with pytest.raises(ValueError):
        aggregate(records[1:], 5)


def test_realization_seed_stable():
    assert realization_seed(0, 3) == realization_seed(0, 3)
    assert len({realization_seed(0, r) for r in range(100)}) == 100


def test_tradeoff_extract(ext_oracle):
    pts = tradeoff_curve(ext_oracle, 256, [-24.0], [0.0, 5.0, 100.0])
    by_loss = {p.loss_pct: p for p in pts}
    assert by_loss[0.0].rus == 1280
    assert by_loss[5.0].rus == 1024
    assert by_loss[100.0].params == LinkParams(3, 1)
    assert by_loss[100.0].rus == 5


def test_tradeoff_unreachable(synth):
    pts = tradeoff_curve(synth, 256, [-40.0], [0.0])
    assert not pts[0].reachable
    assert load_tradeoff(tradeoff_csv(pts)) == pts


@pytest.mark.parametrize("snr", [-24.0, -20.0, -16.0])
def test_tradeoff_shapes(synth, snr):
    unack = tradeoff_curve(synth, 256, [snr])
    ack = tradeoff_curve(synth, 256, [snr], mode="ack")
    assert is_nonincreasing([p.rus for p in unack])
    assert is_nonincreasing([p.rus for p in ack])
    for u, a in zip(unack, ack):
        assert a.rus >= u.rus * (1 - 1e-12)
    assert load_tradeoff(tradeoff_csv(ack)) == ack


def test_ru_drop_share():
    from nbiot_la.simulator import TradeoffPoint
    pts = [TradeoffPoint(-24.0, "unack", float(x), r, None) for x, r in [(0, 100), (5, 40), (10, 20)]]
    assert ru_drop_share(pts) == pytest.approx(0.75)


@given(st.floats(1e-6, 1.0), st.floats(0.01, 0.99), st.integers(2, 64))
def test_harq_sequence_strictly_decreasing(bler0, discount, n):
    from nbiot_la.simulator import harq_bler_sequence
    seq = harq_bler_sequence(bler0, discount, n)
    nonzero = [b for b in seq if b > 0]
    assert all(a > b for a, b in zip(nonzero, nonzero[1:]))


@given(st.floats(0.0, 0.99), st.floats(0.001, 0.5), st.integers(1, 10_000), st.integers(1, 1000))
def test_performance_strictly_decreasing(bler, dbler, rus, drus):
    assert performance(bler, rus + drus) < performance(bler, rus)
    if bler + dbler < 1:
        assert performance(bler + dbler, rus) < performance(bler, rus)
