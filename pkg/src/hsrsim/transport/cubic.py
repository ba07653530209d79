"""CUBIC window growth and loss response."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from ..engine import US_PER_S
from ..packet import MSS
from .base import CongestionController, RateSample

SLOW_START = "slow-start"
CONGESTION_AVOIDANCE = "congestion-avoidance"
FAST_RECOVERY = "fast-recovery"


@dataclass
class CubicState:
    w_max: float = 0.0  # bytes
    k: float = 0.0  # seconds
    epoch_start: Optional[int] = None
    c_coeff: float = 0.4
    beta: float = 0.7
    ssthresh: float = math.inf
    mode: str = SLOW_START
    cwnd: float = 10 * MSS
    mss: int = MSS


def cubic_k(w_max: float, cwnd: float, c_coeff: float, mss: int = MSS) -> float:
    """Time (s) for the cubic curve starting at ``cwnd`` to climb back to ``w_max``."""
    return (max(0.0, w_max - cwnd) / mss / c_coeff) ** (1.0 / 3.0)


def cubic_window(t_since_epoch: float, state: CubicState) -> int:
    """W(t) = C (t - K)^3 + W_max, in bytes, floored at one MSS."""
    w = state.c_coeff * (t_since_epoch - state.k) ** 3 * state.mss + state.w_max
    return max(state.mss, int(w))


class Cubic(CongestionController):
    name = "cubic"

    def __init__(self, mss: int = MSS, c_coeff: float = 0.4, beta: float = 0.7,
                 init_cwnd: Optional[int] = None) -> None:
        super().__init__(mss)
        self.state = CubicState(c_coeff=c_coeff, beta=beta, mss=mss,
                                cwnd=init_cwnd or 10 * mss)
        self.cwnd = int(self.state.cwnd)

    def _start_epoch(self, now: int) -> None:
        s = self.state
        s.epoch_start = now
        if s.cwnd >= s.w_max:
            s.w_max = s.cwnd
        s.k = cubic_k(s.w_max, s.cwnd, s.c_coeff, s.mss)

    def on_ack(self, now: int, rtt: Optional[int], acked: int,
               rs: Optional[RateSample], inflight: int, in_recovery: bool) -> None:
        s = self.state
        if s.mode == FAST_RECOVERY:
            if in_recovery:
                return
            s.mode = CONGESTION_AVOIDANCE
            self._start_epoch(now)
        if acked <= 0:
            return
        if s.mode == SLOW_START:
            s.cwnd += acked
            if s.cwnd >= s.ssthresh:
                s.cwnd = max(s.ssthresh, s.mss)
                s.mode = CONGESTION_AVOIDANCE
                self._start_epoch(now)
        else:
            if s.epoch_start is None:
                self._start_epoch(now)
            s.cwnd = cubic_window((now - s.epoch_start) / US_PER_S, s)
        self.cwnd = int(s.cwnd)

    def on_loss(self, now: int) -> None:
        s = self.state
        s.w_max = s.cwnd
        s.cwnd = max(s.mss, s.beta * s.cwnd)
        s.ssthresh = s.cwnd
        s.k = cubic_k(s.w_max, s.cwnd, s.c_coeff, s.mss)
        s.epoch_start = None
        s.mode = FAST_RECOVERY
        self.cwnd = int(s.cwnd)

    def on_rto(self, now: int, backoff: int = 1) -> None:
        s = self.state
        if backoff <= 1:
            # only the first timeout of a streak resets the congestion memory
            s.w_max = s.cwnd
            s.ssthresh = max(2 * s.mss, s.beta * s.cwnd)
        s.cwnd = s.mss
        s.epoch_start = None
        s.mode = SLOW_START
        self.cwnd = int(s.cwnd)
