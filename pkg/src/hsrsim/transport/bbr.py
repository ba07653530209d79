"""BBR and the variance-compensated BBR+ controller.

Both keep a windowed max of delivery rate (the bottleneck bandwidth
estimate) over the last ``10 * rtprop`` and a windowed min of RTT over the
last 10 s. BBR+ differs in two places: the probe-bw gain cycle alternates
3/2 and 1/2, and its RTprop adds ``lambda`` standard deviations of the RTT,
measured with time-decayed moving averages of RTT and RTT squared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from ..engine import US_PER_S
from ..packet import MSS
from .base import CongestionController, RateSample
from .filters import WindowedFilter, ewma_time_decay

STARTUP = "startup"
DRAIN = "drain"
PROBE_BW = "probe-bw"

HIGH_GAIN = 2.0 / math.log(2.0)
DRAIN_GAIN = 1.0 / HIGH_GAIN
BBR_GAIN_CYCLE = (5 / 4, 3 / 4, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
BBRPLUS_GAIN_CYCLE = (3 / 2, 1 / 2)
MIN_RTT_WINDOW_US = 10 * US_PER_S
BW_WINDOW_RTTS = 10
FULL_BW_THRESH = 1.25
FULL_BW_ROUNDS = 3
MIN_CWND_PKTS = 4


@dataclass
class BbrState:
    btlbw: float = 0.0  # Mbps
    rtprop: Optional[int] = None  # µs, windowed min RTT
    gain_cycle_idx: int = 0
    pacing_gain: float = HIGH_GAIN
    cwnd_gain: float = HIGH_GAIN
    mode: str = STARTUP
    bw_filter: WindowedFilter = field(default_factory=lambda: WindowedFilter("max"))
    rtt_filter: WindowedFilter = field(default_factory=lambda: WindowedFilter("min"))
    cycle_stamp: int = 0
    round_count: int = 0
    next_round_delivered: int = 0
    delivered: int = 0
    full_bw: float = 0.0
    full_bw_count: int = 0
    filled_pipe: bool = False


@dataclass
class BbrPlusState(BbrState):
    lam: float = 0.5
    decay_c: float = 0.2  # 1/s
    ewma_rtt: Optional[float] = None  # µs
    ewma_rtt_sq: Optional[float] = None  # µs^2
    ewma_time: float = 0.0  # s


def bdp_bytes(btlbw: float, rtprop_us: float) -> float:
    return btlbw * rtprop_us / 8.0


def bbr_update_filters(rtt_sample: Optional[int], delivery_rate: Optional[float],
                       now: int, state: BbrState, rtprop: Optional[float] = None) -> None:
    """Feed one RTT / delivery-rate pair into the windowed filters.

    The min-RTT filter is updated first so the bandwidth window
    (``10 * rtprop``) uses the freshest estimate; pass ``rtprop`` to size
    that window from a different RTprop model.
    """
    if rtt_sample is not None:
        if rtt_sample <= 0:
            raise ValueError("rtt sample must be positive")
        state.rtprop = int(state.rtt_filter.update(now, rtt_sample, MIN_RTT_WINDOW_US))
    if delivery_rate is not None:
        rtp = rtprop if rtprop is not None else state.rtprop
        window = BW_WINDOW_RTTS * rtp if rtp else math.inf
        state.btlbw = state.bw_filter.update(now, delivery_rate, window)


def rtprop_plus(min_rtt: float, ewma_mean: float, ewma_sq: float, lam: float) -> float:
    variance = max(0.0, ewma_sq - ewma_mean * ewma_mean)
    return min_rtt + lam * math.sqrt(variance)


def bbrplus_rtprop(state: BbrPlusState) -> float:
    """min RTT plus ``lam`` standard deviations of the recent RTT."""
    if state.rtprop is None or state.ewma_rtt is None:
        raise ValueError("no RTT sample observed yet")
    return rtprop_plus(state.rtprop, state.ewma_rtt, state.ewma_rtt_sq, state.lam)


class Bbr(CongestionController):
    name = "bbr"
    gain_cycle = BBR_GAIN_CYCLE
    probe_cwnd_gain = 2.0

    def __init__(self, mss: int = MSS, init_cwnd: Optional[int] = None) -> None:
        super().__init__(mss)
        self.init_cwnd = init_cwnd or 10 * mss
        self.state = self._new_state()
        self.cwnd = self.init_cwnd
        # nominal 1 ms RTT until the first sample
        self.pacing_rate = HIGH_GAIN * self.init_cwnd * 8 / 1000.0

    def _new_state(self) -> BbrState:
        return BbrState()

    # RTprop as used by the model; BBR+ overrides
    def model_rtprop(self) -> Optional[float]:
        return self.state.rtprop

    def _observe_rtt(self, now: int, rtt: int) -> None:
        pass

    def bdp(self) -> float:
        rtp = self.model_rtprop()
        if rtp is None:
            return float(self.init_cwnd)
        return bdp_bytes(self.state.btlbw, rtp)

    def on_ack(self, now: int, rtt: Optional[int], acked: int,
               rs: Optional[RateSample], inflight: int, in_recovery: bool) -> None:
        s = self.state
        s.delivered += acked
        if rtt is not None:
            self._observe_rtt(now, rtt)
        round_start = False
        if rs is not None and rs.prior_delivered >= s.next_round_delivered:
            s.next_round_delivered = s.delivered
            s.round_count += 1
            round_start = True
        if rtt is not None:
            first = s.rtprop is None
            bbr_update_filters(rtt, None, now, s)
            if first:
                # replace the nominal-RTT guess with one from the real sample
                self.pacing_rate = HIGH_GAIN * self.cwnd * 8 / rtt
        if rs is not None and rs.interval > 0 and (s.rtprop is None or rs.interval >= s.rtprop):
            # samples shorter than a min RTT come from ack compression and overestimate
            bbr_update_filters(None, rs.delivery_rate, now, s, self.model_rtprop())
        if round_start and not s.filled_pipe:
            self._check_full_pipe()
        self._update_mode(now, inflight)
        self._set_pacing_rate()
        self._set_cwnd(acked)

    def _check_full_pipe(self) -> None:
        s = self.state
        if s.btlbw >= s.full_bw * FULL_BW_THRESH:
            s.full_bw = s.btlbw
            s.full_bw_count = 0
            return
        s.full_bw_count += 1
        if s.full_bw_count >= FULL_BW_ROUNDS:
            s.filled_pipe = True

    def _enter_probe_bw(self, now: int) -> None:
        s = self.state
        s.mode = PROBE_BW
        s.gain_cycle_idx = 0
        s.cycle_stamp = now
        s.pacing_gain = self.gain_cycle[0]
        s.cwnd_gain = self.probe_cwnd_gain

    def _update_mode(self, now: int, inflight: int) -> None:
        s = self.state
        if s.mode == STARTUP and s.filled_pipe:
            s.mode = DRAIN
            s.pacing_gain = DRAIN_GAIN
            s.cwnd_gain = HIGH_GAIN
        if s.mode == DRAIN and inflight <= self.bdp():
            self._enter_probe_bw(now)
        if s.mode == PROBE_BW:
            rtp = self.model_rtprop()
            if rtp is not None and now - s.cycle_stamp > rtp:
                s.gain_cycle_idx = (s.gain_cycle_idx + 1) % len(self.gain_cycle)
                s.cycle_stamp = now
                s.pacing_gain = self.gain_cycle[s.gain_cycle_idx]

    def _set_pacing_rate(self) -> None:
        s = self.state
        if s.btlbw <= 0:
            return
        rate = s.pacing_gain * s.btlbw
        if s.filled_pipe or rate > self.pacing_rate:
            self.pacing_rate = rate

    def _target_cwnd(self) -> float:
        return max(self.state.cwnd_gain * self.bdp(), MIN_CWND_PKTS * self.mss)

    def _set_cwnd(self, acked: int) -> None:
        s = self.state
        target = self._target_cwnd()
        cwnd = self.cwnd
        if s.filled_pipe:
            cwnd = min(cwnd + acked, target)
        elif cwnd < target or s.delivered < self.init_cwnd:
            cwnd = cwnd + acked
        self.cwnd = int(max(cwnd, MIN_CWND_PKTS * self.mss))

    def on_loss(self, now: int) -> None:
        # loss-blind: filters and gains are untouched
        pass

    def on_rto(self, now: int, backoff: int = 1) -> None:
        s = self.state
        rtp = self.model_rtprop()
        if rtp is not None:
            bw = s.bw_filter.best(now, BW_WINDOW_RTTS * rtp)
            if bw is not None:
                s.btlbw = bw
        self.cwnd = int(max(self.bdp(), MIN_CWND_PKTS * self.mss))


class BbrPlus(Bbr):
    name = "bbrplus"
    gain_cycle = BBRPLUS_GAIN_CYCLE

    def __init__(self, mss: int = MSS, lam: float = 0.5, decay_c: float = 0.2,
                 init_cwnd: Optional[int] = None) -> None:
        if lam < 0 or decay_c <= 0:
            raise ValueError("lambda must be >= 0 and decay_c > 0")
        self._lam = lam
        self._decay_c = decay_c
        super().__init__(mss, init_cwnd)

    def _new_state(self) -> BbrPlusState:
        return BbrPlusState(lam=self._lam, decay_c=self._decay_c)

    def _observe_rtt(self, now: int, rtt: int) -> None:
        s = self.state
        t = now / US_PER_S
        x = float(rtt)
        if s.ewma_rtt is None:
            s.ewma_rtt, s.ewma_rtt_sq = x, x * x
        else:
            s.ewma_rtt = ewma_time_decay(s.ewma_rtt, s.ewma_time, x, t, s.decay_c)
            s.ewma_rtt_sq = ewma_time_decay(s.ewma_rtt_sq, s.ewma_time, x * x, t, s.decay_c)
        s.ewma_time = t

    def model_rtprop(self) -> Optional[float]:
        s = self.state
        if s.rtprop is None or s.ewma_rtt is None:
            return s.rtprop
        return rtprop_plus(s.rtprop, s.ewma_rtt, s.ewma_rtt_sq, s.lam)


def make_controller(name: str, mss: int = MSS, **params) -> CongestionController:
    key = name.lower().replace("+", "plus").replace("-", "").replace("_", "")
    if key == "cubic":
        from .cubic import Cubic
        return Cubic(mss=mss, **params)
    if key == "bbr":
        return Bbr(mss=mss, **params)
    if key == "bbrplus":
        if "lambda" in params:
            params["lam"] = params.pop("lambda")
        return BbrPlus(mss=mss, **params)
    raise ValueError(f"unknown congestion controller {name!r}; expected cubic, bbr or bbrplus")
