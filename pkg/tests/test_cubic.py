import pytest

from hsrsim.engine import US_PER_S
from hsrsim.packet import MSS
from hsrsim.transport.cubic import (
    CONGESTION_AVOIDANCE,
    FAST_RECOVERY,
    SLOW_START,
    Cubic,
    CubicState,
    cubic_k,
    cubic_window,
)

# cbrt(30 MSS / (0.4 MSS/s^3)) = cbrt(75), evaluated independently
K_75 = 4.217163326508746


def _after_loss(w_max_pkts=100, c=0.4, beta=0.7):
    s = CubicState(c_coeff=c, beta=beta, w_max=w_max_pkts * MSS, cwnd=beta * w_max_pkts * MSS)
    s.k = cubic_k(s.w_max, s.cwnd, c)
    return s


def test_k_for_textbook_parameters():
    s = _after_loss()
    assert s.k == pytest.approx(K_75, abs=1e-9)


def test_window_at_epoch_start_is_beta_times_wmax():
    s = _after_loss()
    assert abs(cubic_window(0.0, s) - 70 * MSS) <= 1


def test_window_at_k_is_wmax():
    s = _after_loss()
    assert cubic_window(s.k, s) == 100 * MSS


def test_slope_is_continuous_through_plateau():
    s = _after_loss()
    h = 1e-3

    def w(t):
        return s.c_coeff * (t - s.k) ** 3 * MSS + s.w_max

    left = (w(s.k) - w(s.k - h)) / h
    right = (w(s.k + h) - w(s.k)) / h
    assert left == pytest.approx(right, abs=1e-2)
    assert left == pytest.approx(0.0, abs=1e-2)


def test_window_floor_is_one_mss():
    s = CubicState(w_max=2 * MSS, k=100.0)
    assert cubic_window(0.0, s) == MSS


def test_single_loss_multiplicative_decrease():
    cc = Cubic()
    cc.state.cwnd = 100 * MSS
    cc.on_loss(0)
    assert cc.cwnd == 70 * MSS
    assert cc.state.w_max == 100 * MSS
    assert cc.state.mode == FAST_RECOVERY


def test_rto_collapses_to_one_mss_slow_start():
    cc = Cubic()
    cc.state.cwnd = 50 * MSS
    cc.on_rto(0)
    assert cc.cwnd == MSS
    assert cc.state.mode == SLOW_START
    assert cc.state.ssthresh == pytest.approx(35 * MSS)


def test_slow_start_adds_acked_bytes():
    cc = Cubic()
    start = cc.cwnd
    cc.on_ack(1000, 50_000, MSS, None, 0, False)
    assert cc.cwnd == start + MSS


def test_recovery_freezes_window_until_exit():
    cc = Cubic()
    cc.state.cwnd = 100 * MSS
    cc.on_loss(0)
    cc.on_ack(10_000, None, MSS, None, 0, True)
    assert cc.cwnd == 70 * MSS
    cc.on_ack(20_000, None, MSS, None, 0, False)
    assert cc.state.mode == CONGESTION_AVOIDANCE


def test_congestion_avoidance_follows_closed_form():
    cc = Cubic()
    cc.state.cwnd = 100 * MSS
    cc.on_loss(0)
    t_exit = 50_000
    cc.on_ack(t_exit, None, MSS, None, 0, False)  # leaves recovery, epoch starts here
    ref = _after_loss()
    t = t_exit
    while t < t_exit + 8 * US_PER_S:
        t += 10_000
        cc.on_ack(t, None, MSS, None, 0, False)
        expect = ref.c_coeff * ((t - t_exit) / US_PER_S - ref.k) ** 3 * MSS + ref.w_max
        assert abs(cc.cwnd - expect) <= MSS
