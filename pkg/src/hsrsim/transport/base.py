from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..packet import MSS


@dataclass(slots=True)
class RateSample:
    delivery_rate: float  # Mbps
    interval: int  # µs
    delivered: int  # bytes delivered over the interval
    prior_delivered: int  # sender's delivered count when the packet left


class CongestionController:
    """Contract every controller implements.

    Controllers only see their inputs; they never read a clock. ``cwnd`` is
    in bytes and ``pacing_rate`` in Mbps (``None`` means unpaced).
    """

    name = "base"

    def __init__(self, mss: int = MSS) -> None:
        self.mss = mss
        self.cwnd: int = 10 * mss
        self.pacing_rate: Optional[float] = None

    def on_ack(self, now: int, rtt: Optional[int], acked: int,
               rs: Optional[RateSample], inflight: int, in_recovery: bool) -> None:
        raise NotImplementedError

    def on_loss(self, now: int) -> None:
        raise NotImplementedError

    def on_rto(self, now: int, backoff: int = 1) -> None:
        raise NotImplementedError
