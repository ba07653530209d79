"""Time-windowed running max/min and a time-decayed moving average."""

from __future__ import annotations

import math
from collections import deque
from typing import Optional


class WindowedFilter:
    """Running max (or min) over samples no older than a sliding time window.

    Monotonic deque: O(1) amortized per update. The window length may change
    between calls; a sample evicted once stays evicted.
    """

    def __init__(self, mode: str = "max") -> None:
        if mode not in ("max", "min"):
            raise ValueError("mode must be 'max' or 'min'")
        self._max = mode == "max"
        self._q: deque = deque()

    def __len__(self) -> int:
        return len(self._q)

    def evict(self, now: int, window: float) -> None:
        q = self._q
        horizon = now - window
        while q and q[0][0] < horizon:
            q.popleft()

    def update(self, t: int, value: float, window: float) -> float:
        q = self._q
        if self._max:
            while q and q[-1][1] <= value:
                q.pop()
        else:
            while q and q[-1][1] >= value:
                q.pop()
        q.append((t, value))
        self.evict(t, window)
        return q[0][1]

    def best(self, now: Optional[int] = None, window: Optional[float] = None) -> Optional[float]:
        if now is not None and window is not None:
            self.evict(now, window)
        return self._q[0][1] if self._q else None

    def reset(self) -> None:
        self._q.clear()


def ewma_time_decay(prev: float, prev_time: float, sample: float, now: float, decay_c: float) -> float:
    """One step of an exponential average whose weights decay with elapsed time.

    Times are in seconds and ``decay_c`` in 1/s. For a piecewise-constant
    signal this reproduces ``c * integral exp(-c (now - t)) x(t) dt``
    exactly, whatever the spacing between samples.
    """
    if now < prev_time:
        raise ValueError("time went backwards")
    return sample + (prev - sample) * math.exp(-decay_c * (now - prev_time))
