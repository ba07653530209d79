import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from hsrsim.packet import MSS
from hsrsim.transport.base import RateSample
from hsrsim.transport.bbr import (
    BBR_GAIN_CYCLE,
    BBRPLUS_GAIN_CYCLE,
    MIN_CWND_PKTS,
    PROBE_BW,
    Bbr,
    BbrPlus,
    BbrPlusState,
    BbrState,
    bbr_update_filters,
    bbrplus_rtprop,
    make_controller,
    rtprop_plus,
)

# 100 + 0.5 * sqrt(23000 - 150^2), worked by hand: sqrt(500) = 22.360679...
RTPROP_PLUS_CASE_MS = 111.18034


def test_btlbw_is_window_max():
    s = BbrState()
    for t, rate in [(0, 5.0), (1000, 8.0), (2000, 6.0)]:
        bbr_update_filters(50_000, rate, t, s)
    assert s.btlbw == 8.0
    assert s.rtprop == 50_000


def test_rtprop_ages_out_after_ten_seconds():
    s = BbrState()
    bbr_update_filters(100_000, None, 0, s)
    t = 0
    while t < 11_000_000:
        t += 100_000
        bbr_update_filters(300_000, None, t, s)
    assert s.rtprop == 300_000


def test_bandwidth_window_is_ten_rtprops():
    s = BbrState()
    bbr_update_filters(10_000, 9.0, 0, s)  # rtprop 10 ms -> 100 ms window
    bbr_update_filters(10_000, 2.0, 99_000, s)
    assert s.btlbw == 9.0
    bbr_update_filters(10_000, 2.0, 101_000, s)
    assert s.btlbw == 2.0


def test_nonpositive_rtt_rejected():
    with pytest.raises(ValueError):
        bbr_update_filters(0, None, 0, BbrState())


def test_probe_bw_cycle_averages_to_one():
    assert sum(Fraction(g).limit_denominator(8) for g in BBR_GAIN_CYCLE) / 8 == 1
    assert sum(BBR_GAIN_CYCLE) / len(BBR_GAIN_CYCLE) == 1.0
    assert sum(BBRPLUS_GAIN_CYCLE) / len(BBRPLUS_GAIN_CYCLE) == 1.0


def test_probe_bw_gains_over_eight_rtprops_average_exactly_one():
    cc = Bbr()
    s = cc.state
    s.rtprop = 40_000
    s.filled_pipe = True
    cc._enter_probe_bw(0)
    gains = [s.pacing_gain]
    t = 0
    for _ in range(7):
        t += s.rtprop + 1
        cc._update_mode(t, 0)
        gains.append(s.pacing_gain)
    assert s.mode == PROBE_BW
    assert sorted(gains) == sorted(BBR_GAIN_CYCLE)
    assert sum(gains) / 8 == 1.0


def test_rtprop_plus_hand_computed_case():
    assert rtprop_plus(100.0, 150.0, 23_000.0, 0.5) == pytest.approx(RTPROP_PLUS_CASE_MS, abs=0.01)


def test_rtprop_plus_zero_variance_or_lambda_is_min():
    assert rtprop_plus(100.0, 100.0, 10_000.0, 0.5) == 100.0
    assert rtprop_plus(100.0, 150.0, 23_000.0, 0.0) == 100.0


def test_rtprop_plus_clamps_negative_variance():
    # E[x^2] a hair below E[x]^2 from floating-point drift
    assert rtprop_plus(100.0, 150.0, 22_499.999999, 1.0) == 100.0


def test_bbrplus_rtprop_needs_a_sample():
    with pytest.raises(ValueError):
        bbrplus_rtprop(BbrPlusState())


@settings(max_examples=50, deadline=None)
@given(
    rtts=st.lists(st.integers(20_000, 2_000_000), min_size=1, max_size=200),
    lam=st.sampled_from([0.0, 0.125, 0.5, 1.0]),
)
def test_rtprop_plus_never_below_bbr_rtprop(rtts, lam):
    plain = Bbr()
    plus = BbrPlus(lam=lam)
    t = 0
    for r in rtts:
        t += 10_000
        for cc in (plain, plus):
            cc.on_ack(t, r, MSS, None, 0, False)
    assert plus.state.rtprop == plain.state.rtprop
    assert plus.model_rtprop() >= plain.model_rtprop()
    if lam == 0.0 or len(set(rtts)) == 1:
        assert plus.model_rtprop() == pytest.approx(plain.model_rtprop())


def test_loss_leaves_model_untouched():
    cc = Bbr()
    t = 0
    for _ in range(50):
        t += 10_000
        cc.on_ack(t, 60_000, MSS, RateSample(4.0, 60_000, 30_000, 0), 20 * MSS, False)
    before = (cc.cwnd, cc.pacing_rate, cc.state.btlbw, cc.state.rtprop)
    cc.on_loss(t)
    assert (cc.cwnd, cc.pacing_rate, cc.state.btlbw, cc.state.rtprop) == before


def test_rto_restarts_at_one_bdp():
    cc = Bbr()
    s = cc.state
    bbr_update_filters(100_000, 8.0, 0, s)
    cc.cwnd = 400 * MSS
    cc.on_rto(50_000)
    assert cc.cwnd == int(8.0 * 100_000 / 8)  # 100 kB
    cc.state.btlbw = 0.01
    cc.on_rto(60_000)
    assert cc.cwnd >= MIN_CWND_PKTS * MSS


def test_short_rate_samples_are_ignored():
    cc = Bbr()
    cc.on_ack(1000, 50_000, MSS, RateSample(5.0, 60_000, 1, 0), 0, False)
    cc.on_ack(2000, 50_000, MSS, RateSample(50.0, 10_000, 1, 0), 0, False)  # ack compression
    assert cc.state.btlbw == 5.0


@pytest.mark.parametrize("name,cls", [("bbr", Bbr), ("BBR+", BbrPlus), ("bbrplus", BbrPlus)])
def test_factory(name, cls):
    assert isinstance(make_controller(name), cls)


def test_factory_maps_lambda_and_rejects_unknown():
    cc = make_controller("bbrplus", **{"lambda": 0.125, "decay_c": 0.5})
    assert cc.state.lam == 0.125 and cc.state.decay_c == 0.5
    with pytest.raises(ValueError):
        make_controller("vegas")
    with pytest.raises(ValueError):
        BbrPlus(lam=-1)
