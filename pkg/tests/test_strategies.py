import pytest
from hypothesis import given, strategies as st

from nbiot_la.channel import NR_VALUES, LinkParams
from nbiot_la.errors import ConfigError
from nbiot_la.lut import Lut
from nbiot_la.strategies import (
    BlerEstimator,
    Bounds,
    DecisionContext,
    StrategyKind,
    Verdict,
    make_strategy,
    next_link_params_itbs_and_nr,
    next_link_params_itbs_nr,
    next_link_params_luts,
    next_link_params_nr_itbs,
    next_link_params_single_axis,
)

HIGH, LOW, MID = 0.4, 0.0, 0.05


def ctx(itbs, nr, est, bler_t=0.05, **kw):
    return DecisionContext(LinkParams(itbs, nr), bler_t, bler_est=est, **kw)


def test_itbs_nr_examples():
    assert next_link_params_itbs_nr(ctx(2, 64, HIGH)) == LinkParams(1, 64)
    assert next_link_params_itbs_nr(ctx(0, 128, HIGH)) is Verdict.TARGET_UNREACHABLE
    assert next_link_params_itbs_nr(ctx(3, 1, LOW)) is Verdict.FLOOR_REACHED
    assert next_link_params_itbs_nr(ctx(0, 64, HIGH)) == LinkParams(0, 128)
    assert next_link_params_itbs_nr(ctx(3, 64, LOW)) == LinkParams(3, 32)


def test_nr_itbs_examples():
    assert next_link_params_nr_itbs(ctx(2, 64, HIGH)) == LinkParams(2, 128)
    assert next_link_params_nr_itbs(ctx(2, 128, HIGH)) == LinkParams(1, 128)
    assert next_link_params_nr_itbs(ctx(2, 64, MID)) is Verdict.IN_RANGE
    assert next_link_params_nr_itbs(ctx(0, 128, HIGH)) is Verdict.TARGET_UNREACHABLE
    assert next_link_params_nr_itbs(ctx(3, 1, LOW)) is Verdict.FLOOR_REACHED


def test_single_axis_examples():
    out = next_link_params_single_axis(ctx(1, 64, HIGH), StrategyKind.NR_ONLY)
    assert out == LinkParams(1, 128)
    assert next_link_params_single_axis(ctx(0, 128, HIGH), StrategyKind.ITBS_ONLY) is Verdict.TARGET_UNREACHABLE
    assert next_link_params_single_axis(ctx(2, 128, HIGH), StrategyKind.ITBS_ONLY) == LinkParams(1, 128)
    with pytest.raises(ConfigError):
        next_link_params_single_axis(ctx(2, 128, HIGH), StrategyKind.LUTS)


def test_nr_only_pins_itbs():
    s = make_strategy("nr", itbs_max=3)
    assert s.current.itbs == 1
    s2 = make_strategy("itbs")
    assert s2.current.nr == 128


def test_itbs_and_nr_examples():
    assert next_link_params_itbs_and_nr(ctx(2, 32, HIGH)) == LinkParams(1, 64)
    assert next_link_params_itbs_and_nr(ctx(0, 128, HIGH)) is Verdict.TARGET_UNREACHABLE
    assert next_link_params_itbs_and_nr(ctx(1, 64, LOW)) == LinkParams(2, 32)
    assert next_link_params_itbs_and_nr(ctx(3, 1, LOW)) is Verdict.FLOOR_REACHED
    assert next_link_params_itbs_and_nr(ctx(0, 4, HIGH)) == LinkParams(0, 8)


@given(st.integers(0, 3), st.sampled_from(NR_VALUES))
def test_itbs_and_nr_mirror(itbs, nr):
    up = next_link_params_itbs_and_nr(ctx(itbs, nr, HIGH))
    if isinstance(up, LinkParams) and up.itbs == itbs - 1 and up.nr == nr * 2:
        assert next_link_params_itbs_and_nr(ctx(up.itbs, up.nr, LOW)) == LinkParams(itbs, nr)


def test_tolerance_band():
    assert next_link_params_itbs_nr(ctx(2, 64, 0.07)) is Verdict.IN_RANGE
    assert next_link_params_itbs_nr(ctx(2, 64, 0.08)) == LinkParams(1, 64)
    assert next_link_params_itbs_nr(ctx(2, 64, 0.07, tolerance=0.01)) == LinkParams(1, 64)


RULES = [next_link_params_itbs_nr, next_link_params_nr_itbs, next_link_params_itbs_and_nr]


def robustness(p):
    return (-p.itbs, p.nr)


@pytest.mark.parametrize("rule", RULES)
@given(itbs=st.integers(0, 3), nr=st.sampled_from(NR_VALUES))
def test_high_bler_never_less_robust(rule, itbs, nr):
    out = rule(ctx(itbs, nr, HIGH))
    if isinstance(out, LinkParams):
        assert out.itbs <= itbs and out.nr >= nr and out != LinkParams(itbs, nr)
    else:
        assert out is Verdict.TARGET_UNREACHABLE


@pytest.mark.parametrize("rule", RULES)
@given(itbs=st.integers(0, 3), nr=st.sampled_from(NR_VALUES))
def test_low_bler_never_more_robust(rule, itbs, nr):
    out = rule(ctx(itbs, nr, LOW))
    if isinstance(out, LinkParams):
        assert out.itbs >= itbs and out.nr <= nr and out != LinkParams(itbs, nr)
    else:
        assert out is Verdict.FLOOR_REACHED


@pytest.mark.parametrize("rule", RULES)
@pytest.mark.parametrize("est", [HIGH, LOW])
def test_monotone_walk_terminates(rule, est):
    # a one-directional walk over the 4 x 8 lattice needs at most 3 + 7 steps
    cur = LinkParams(1, 8)
    for steps in range(11):
        out = rule(ctx(cur.itbs, cur.nr, est))
        if isinstance(out, Verdict):
            break
        cur = out
    assert isinstance(out, Verdict)
    assert steps <= 10


def test_luts_rule(ext_lut):
    c = DecisionContext(LinkParams(1, 1), 0.05, 256, snr_est=-24.0)
    assert next_link_params_luts(c, ext_lut) == LinkParams(1, 128)
    assert next_link_params_luts(c, ext_lut) == LinkParams(1, 128)
    c2 = DecisionContext(LinkParams(1, 1), 0.05, 256, snr_est=-23.6)
    assert next_link_params_luts(c2, ext_lut) == LinkParams(1, 128)
    c3 = DecisionContext(LinkParams(1, 1), 0.05, 256, snr_est=-30.0)
    assert next_link_params_luts(c3, ext_lut) is Verdict.TARGET_UNREACHABLE


def test_luts_absorbs_small_error(full_lut):
    for snr in range(-24, -16):
        base = DecisionContext(LinkParams(1, 1), 0.05, 256, snr_est=snr + 0.5)
        moved = DecisionContext(LinkParams(1, 1), 0.05, 256, snr_est=snr + 0.9)
        assert next_link_params_luts(base, full_lut) == next_link_params_luts(moved, full_lut)


def test_estimator_examples():
    est = BlerEstimator(window=20, min_samples=1)
    for _ in range(10):
        est.update(False)
    assert est.estimate == 0.0
    est = BlerEstimator(window=20, min_samples=1)
    for i in range(10):
        est.update(i < 5)
    assert est.estimate == 0.5
    est = BlerEstimator(window=20)
    for i in range(101):
        est.update(i % 2 == 0)
    assert est.estimate == 0.5


def test_estimator_warm_up():
    est = BlerEstimator(window=20, min_samples=5)
    for _ in range(4):
        assert est.update(True).estimate is None
    assert est.update(True).estimate == 1.0


@given(st.lists(st.booleans(), max_size=80), st.integers(1, 30))
def test_estimator_matches_direct_count(outcomes, window):
    est = BlerEstimator(window=window, min_samples=1)
    for o in outcomes:
        est.update(o)
    tail = outcomes[-window:]
    if tail:
        assert est.estimate == pytest.approx(sum(tail) / len(tail), abs=1e-12)
    else:
        assert est.estimate is None


def test_estimator_bad_config():
    with pytest.raises(ConfigError):
        BlerEstimator(window=5, min_samples=6)


def test_strategy_warm_up_and_step():
    s = make_strategy("itbs-nr")
    assert s.decide(256) == (LinkParams(1, 1), Verdict.WARM_UP)
    for _ in range(5):
        s.observe(True)
    assert s.decide(256) == (LinkParams(0, 1), None)


def test_strategy_luts_needs_lut_and_snr(ext_lut):
    with pytest.raises(ConfigError):
        make_strategy("luts")
    s = make_strategy("luts", lut=ext_lut)
    with pytest.raises(ConfigError):
        s.decide(256)
    assert s.decide(256, -24.0) == (LinkParams(1, 128), None)
    assert s.decide(256, -24.0) == (LinkParams(1, 128), Verdict.IN_RANGE)


def test_unknown_strategy():
    with pytest.raises(ConfigError):
        make_strategy("greedy")


def test_bounds_validation():
    with pytest.raises(ConfigError):
        Bounds(itbs_max=-1)
    with pytest.raises(ConfigError):
        Bounds(nr_max=3)


def test_empty_lut_is_unreachable():
    s = make_strategy("luts", lut=Lut())
    assert s.decide(256, -24.0)[1] is Verdict.TARGET_UNREACHABLE
