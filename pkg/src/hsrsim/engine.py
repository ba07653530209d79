"""Virtual-time discrete-event engine.

Time is an integer count of microseconds since the start of the run. Events
with equal timestamps fire in the order they were scheduled.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

US_PER_S = 1_000_000
US_PER_MS = 1_000


def seconds(t: float) -> int:
    """Convert seconds to simulation time (µs)."""
    return int(round(t * US_PER_S))


def ms(t: float) -> int:
    return int(round(t * US_PER_MS))


class EventKind(enum.Enum):
    PACKET_ARRIVAL = "packet-arrival"
    TIMER = "timer"
    HANDOVER_START = "handover-start"
    HANDOVER_END = "handover-end"
    PHY_UPDATE = "phy-update"
    APP_SEND = "app-send"


@dataclass
class Event:
    fire_at: int
    kind: EventKind
    handler: Callable[..., Any]
    payload: Any = None


class SchedulingError(RuntimeError):
    pass


class Simulator:
    """Single-threaded event loop.

    ``post_event_hook`` (if set) is called after every processed event; tests
    use it to check invariants at event granularity.
    """

    def __init__(self) -> None:
        self._now = 0
        self._seq = 0
        self._queue: list = []
        self._stopped = False
        self.processed = 0
        self.post_event_hook: Optional[Callable[[Event], None]] = None

    def now(self) -> int:
        return self._now

    def schedule(self, event: Event) -> Event:
        if event.fire_at < self._now:
            raise SchedulingError(
                f"cannot schedule {event.kind.value} at t={event.fire_at}us, now={self._now}us"
            )
        heapq.heappush(self._queue, (event.fire_at, self._seq, event))
        self._seq += 1
        return event

    def at(self, fire_at: int, kind: EventKind, handler: Callable[..., Any], payload: Any = None) -> Event:
        return self.schedule(Event(int(fire_at), kind, handler, payload))

    def after(self, delay: int, kind: EventKind, handler: Callable[..., Any], payload: Any = None) -> Event:
        return self.schedule(Event(self._now + int(delay), kind, handler, payload))

    def stop(self) -> None:
        """Stop the current ``run_until`` after the event being processed."""
        self._stopped = True

    @property
    def stopped(self) -> bool:
        return self._stopped

    def pending(self) -> int:
        return len(self._queue)

    def run_until(self, end: int) -> int:
        queue = self._queue
        pop = heapq.heappop
        hook = self.post_event_hook
        count = 0
        while queue and queue[0][0] <= end and not self._stopped:
            t, _, ev = pop(queue)
            self._now = t
            if ev.payload is None:
                ev.handler()
            else:
                ev.handler(ev.payload)
            count += 1
            if hook is not None:
                hook(ev)
        if not self._stopped:
            self._now = max(self._now, end)
        self.processed += count
        return count


def _derive_seed(seed: int, stream_id: str) -> int:
    digest = hashlib.sha256(f"{int(seed)}:{stream_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class RngStream:
    """Named random stream. Same (seed, stream_id) gives the same draws everywhere."""

    seed: int
    stream_id: str
    _rng: random.Random = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._rng = random.Random(_derive_seed(self.seed, self.stream_id))

    def random(self) -> float:
        return self._rng.random()

    def expovariate(self, rate: float) -> float:
        return self._rng.expovariate(rate)

    def lognormvariate(self, mu: float, sigma: float) -> float:
        return self._rng.lognormvariate(mu, sigma)

    @property
    def raw(self) -> random.Random:
        return self._rng
