"""Simulated LTE bottleneck.

The link is a drop-tail FIFO served at a piecewise-constant PHY rate. A
handover halts service for its whole interval; what happens to the buffer
depends on the handover type:

* Type I (successful): buffer kept, drained back-to-back at ``ho_end``.
* Type II (radio link failure): buffer kept, service resumes at ``ho_end``.
* Type III (NAS recovery): buffer discarded at ``ho_start``.
"""

from __future__ import annotations

import bisect
import enum
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

from . import trace as tr
from .engine import US_PER_MS, US_PER_S, EventKind, RngStream, Simulator, seconds
from .packet import Packet

TRACE_SECONDS = 150.0  # handover rates are quoted per 150 s trace
PHY_PERIOD_US = 100 * US_PER_MS
DEFAULT_BUFFER = 3_000_000
DEFAULT_OWD_MS = 25.0


class HandoverKind(enum.Enum):
    TYPE_I = "I"
    TYPE_II = "II"
    TYPE_III = "III"

    @classmethod
    def parse(cls, value) -> "HandoverKind":
        if isinstance(value, cls):
            return value
        s = str(value).strip().upper()
        for k in cls:
            if s in (k.value, k.name, f"TYPE{k.value}"):
                return k
        raise ValueError(f"unknown handover kind {value!r}")


HO_KINDS = (HandoverKind.TYPE_I, HandoverKind.TYPE_II, HandoverKind.TYPE_III)


@dataclass(frozen=True)
class HandoverEvent:
    kind: HandoverKind
    ho_start: int
    ho_end: int

    def __post_init__(self) -> None:
        if not self.ho_start < self.ho_end:
            raise ValueError(f"handover needs ho_start < ho_end, got {self.ho_start}..{self.ho_end}")

    @property
    def duration(self) -> int:
        return self.ho_end - self.ho_start


# speed -> (PHY rate w/o HO in Mbps, durations I/II/III in s, counts I/II/III per 150 s)
SPEED_TABLE: dict = {
    0: (14.68, (0.0, 0.0, 0.0), (0.0, 0.0, 0.0)),
    200: (10.19, (0.35, 3.13, 4.03), (4.41, 0.18, 0.18)),
    300: (8.89, (0.16, 2.09, 3.98), (9.36, 0.96, 0.84)),
    350: (3.00, (0.21, 1.91, 5.49), (14.70, 2.00, 1.49)),
}

# carrier -> (static loss, high-speed loss)
CARRIER_LOSS: dict = {
    "A": (0.00008, 0.0021),
    "B": (0.00008, 0.0135),
}


@dataclass(frozen=True)
class LinkProfile:
    speed: int
    phy_rate_mean: float
    phy_jitter: float = 0.0
    random_loss: float = 0.0
    base_owd: float = DEFAULT_OWD_MS
    buffer_capacity: int = DEFAULT_BUFFER
    ho_rates: Mapping = field(default_factory=lambda: {k: 0.0 for k in HO_KINDS})
    ho_durations: Mapping = field(default_factory=lambda: {k: 0.0 for k in HO_KINDS})
    carrier: str = "A"
    # Type III: packets arriving while the UE has no bearer are lost too.
    nas_drop_arrivals: bool = True
    scripted_handovers: Optional[tuple] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.random_loss < 1.0:
            raise ValueError(f"random_loss must be in [0, 1), got {self.random_loss}")
        if self.phy_rate_mean <= 0:
            raise ValueError("phy_rate_mean must be positive")
        if self.phy_jitter < 0:
            raise ValueError("phy_jitter must be nonnegative")
        if self.buffer_capacity <= 0 or self.base_owd < 0:
            raise ValueError("buffer_capacity must be positive and base_owd nonnegative")
        rates = {HandoverKind.parse(k): float(v) for k, v in self.ho_rates.items()}
        durs = {HandoverKind.parse(k): float(v) for k, v in self.ho_durations.items()}
        for k in HO_KINDS:
            rates.setdefault(k, 0.0)
            durs.setdefault(k, 0.0)
        if any(v < 0 for v in rates.values()) or any(v < 0 for v in durs.values()):
            raise ValueError("handover rates and durations must be nonnegative")
        if self.speed == 0 and any(v > 0 for v in rates.values()):
            raise ValueError("a static profile (speed 0) cannot have handovers")
        object.__setattr__(self, "ho_rates", rates)
        object.__setattr__(self, "ho_durations", durs)

    def with_overrides(self, **kw) -> "LinkProfile":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = {
            "speed": self.speed,
            "carrier": self.carrier,
            "phy_rate_mean": self.phy_rate_mean,
            "phy_jitter": self.phy_jitter,
            "random_loss": self.random_loss,
            "base_owd": self.base_owd,
            "buffer_capacity": self.buffer_capacity,
            "ho_rates": {k.value: v for k, v in self.ho_rates.items()},
            "ho_durations": {k.value: v for k, v in self.ho_durations.items()},
            "nas_drop_arrivals": self.nas_drop_arrivals,
        }
        if self.scripted_handovers is not None:
            d["scripted_handovers"] = [
                {"kind": h.kind.value, "start": h.ho_start / US_PER_S, "end": h.ho_end / US_PER_S}
                for h in self.scripted_handovers
            ]
        return d


def build_profile(speed: int, carrier: str = "A", **overrides) -> LinkProfile:
    if speed not in SPEED_TABLE:
        raise ValueError(
            f"unsupported speed {speed} km/h; valid presets: "
            + ", ".join(preset_names())
        )
    carrier = str(carrier).upper()
    if carrier not in CARRIER_LOSS:
        raise ValueError(f"unknown carrier {carrier!r}; expected one of {sorted(CARRIER_LOSS)}")
    phy, durs, counts = SPEED_TABLE[speed]
    static_loss, hsr_loss = CARRIER_LOSS[carrier]
    prof = LinkProfile(
        speed=speed,
        carrier=carrier,
        phy_rate_mean=phy,
        random_loss=static_loss if speed == 0 else hsr_loss,
        ho_rates=dict(zip(HO_KINDS, counts)),
        ho_durations=dict(zip(HO_KINDS, durs)),
    )
    return replace(prof, **overrides) if overrides else prof


def preset_names() -> list:
    names = []
    for speed in SPEED_TABLE:
        for carrier in CARRIER_LOSS:
            names.append(f"static-{carrier}" if speed == 0 else f"hsr-{speed}-{carrier}")
    return names


def preset(name: str) -> LinkProfile:
    parts = name.strip().split("-")
    try:
        if len(parts) == 2 and parts[0] == "static":
            return build_profile(0, parts[1])
        if len(parts) == 3 and parts[0] == "hsr":
            return build_profile(int(parts[1]), parts[2])
    except ValueError:
        pass
    raise ValueError(f"unknown preset {name!r}; valid presets: {', '.join(preset_names())}")


def sample_handover_schedule(profile: LinkProfile, horizon: int, rng: RngStream) -> list:
    """Draw a handover schedule over ``[0, horizon)`` µs.

    Each type arrives as a Poisson process with its per-150 s rate and an
    exponential duration. Overlaps are resolved by pushing the later event
    to start when the earlier one ends, so per-type counts are preserved.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if profile.scripted_handovers is not None:
        return list(profile.scripted_handovers)
    horizon_s = horizon / US_PER_S
    drawn = []
    for order, kind in enumerate(HO_KINDS):
        rate = profile.ho_rates[kind] / TRACE_SECONDS
        mean_dur = profile.ho_durations[kind]
        if rate <= 0 or mean_dur <= 0:
            continue
        t = 0.0
        while True:
            t += rng.expovariate(rate)
            if t >= horizon_s:
                break
            dur = max(1, seconds(rng.expovariate(1.0 / mean_dur)))
            drawn.append((seconds(t), order, dur, kind))
    drawn.sort(key=lambda x: (x[0], x[1]))
    out = []
    prev_end = -1
    for start, _, dur, kind in drawn:
        start = max(start, prev_end)
        out.append(HandoverEvent(kind, start, start + dur))
        prev_end = start + dur
    return out


class PhyProcess:
    """Link capacity over time.

    Piecewise constant, resampled every ``period`` µs as
    ``phy_rate_mean * LogNormal`` with unit mean and coefficient of variation
    ``phy_jitter``; zero inside any handover interval.
    """

    def __init__(self, profile: LinkProfile, horizon: int, rng: RngStream,
                 schedule: Sequence[HandoverEvent] = (), period: int = PHY_PERIOD_US) -> None:
        self.period = period
        self.mean = profile.phy_rate_mean
        n = horizon // period + 1
        cv = profile.phy_jitter
        if cv > 0:
            sigma2 = math.log1p(cv * cv)
            mu, sigma = -sigma2 / 2.0, math.sqrt(sigma2)
            self.slots = [self.mean * rng.lognormvariate(mu, sigma) for _ in range(n)]
        else:
            self.slots = [self.mean] * n
        self._starts = [h.ho_start for h in schedule]
        self._ends = [h.ho_end for h in schedule]

    def slot_rate(self, t: int) -> float:
        i = t // self.period
        return self.slots[i] if i < len(self.slots) else self.slots[-1]

    def in_handover(self, t: int) -> bool:
        i = bisect.bisect_right(self._starts, t) - 1
        return i >= 0 and t < self._ends[i]

    def rate_at(self, t: int) -> float:
        if self.in_handover(t):
            return 0.0
        return self.slot_rate(t)


def phy_rate_at(t: int, phy: PhyProcess) -> float:
    return phy.rate_at(t)


class EnqueueResult(enum.Enum):
    ACCEPTED = "accepted"
    DROPPED_RANDOM_LOSS = "dropped-random-loss"
    DROPPED_BUFFER_FULL = "dropped-buffer-full"
    DROPPED_OUTAGE = "dropped-outage"


@dataclass
class LinkState:
    current_phy_rate: float = 0.0
    buffer: deque = field(default_factory=deque)
    in_handover: Optional[HandoverEvent] = None
    bytes_enqueued: int = 0  # every byte offered to the link
    bytes_delivered: int = 0
    bytes_dropped: int = 0
    bytes_resident: int = 0
    bytes_forwarded: int = 0  # resident bytes carried across Type I/II handovers
    drops_by_reason: dict = field(default_factory=dict)

    def conserved(self) -> bool:
        return self.bytes_enqueued == self.bytes_delivered + self.bytes_dropped + self.bytes_resident


class Link:
    def __init__(self, sim: Simulator, profile: LinkProfile, phy: PhyProcess,
                 loss_rng: RngStream, deliver: Callable[[Packet], None],
                 trace: Optional[tr.FlowTrace] = None) -> None:
        self.sim = sim
        self.profile = profile
        self.phy = phy
        self.state = LinkState(current_phy_rate=phy.rate_at(0))
        self._loss = profile.random_loss
        self._rand = loss_rng.raw.random
        self._deliver = deliver
        self._trace = trace
        self._rec = trace.records.append if trace is not None else None
        self._busy = False
        self._gen = 0
        self.handovers_applied: list = []

    # handover / PHY wiring

    def install(self, schedule: Sequence[HandoverEvent], horizon: int) -> None:
        """Schedule PHY resampling and every handover interval on the simulator."""
        for t in range(0, horizon + 1, self.phy.period):
            self.sim.at(t, EventKind.PHY_UPDATE, self._phy_update)
        for h in schedule:
            self.sim.at(h.ho_start, EventKind.HANDOVER_START, self.begin_handover, h)
            self.sim.at(h.ho_end, EventKind.HANDOVER_END, self.end_handover, h)

    def _record(self, kind: str, seq: int, nbytes: int, extra: str) -> None:
        if self._rec is not None:
            self._rec(tr.Record(self.sim.now(), kind, seq, nbytes, extra))

    def _phy_update(self) -> None:
        st = self.state
        rate = 0.0 if st.in_handover is not None else self.phy.slot_rate(self.sim.now())
        st.current_phy_rate = rate
        self._record(tr.PHY_RATE, 0, 0, repr(round(rate, 6)))

    def begin_handover(self, ev: HandoverEvent) -> None:
        apply_handover(ev, self)

    def end_handover(self, ev: HandoverEvent) -> None:
        st = self.state
        if st.in_handover is not ev:
            return
        st.in_handover = None
        st.current_phy_rate = self.phy.slot_rate(self.sim.now())
        self._record(tr.HO_END, self.handovers_applied.index(ev), 0, ev.kind.value)
        self._record(tr.PHY_RATE, 0, 0, repr(round(st.current_phy_rate, 6)))
        if st.buffer and not self._busy:
            self._start_service()

    # data path

    def enqueue(self, pkt: Packet) -> EnqueueResult:
        st = self.state
        size = pkt.size
        st.bytes_enqueued += size
        if self._loss > 0.0 and self._rand() < self._loss:
            self._drop(pkt, "random")
            return EnqueueResult.DROPPED_RANDOM_LOSS
        ho = st.in_handover
        if ho is not None and ho.kind is HandoverKind.TYPE_III and self.profile.nas_drop_arrivals:
            self._drop(pkt, "outage")
            return EnqueueResult.DROPPED_OUTAGE
        if st.bytes_resident + size > self.profile.buffer_capacity:
            self._drop(pkt, "buffer")
            return EnqueueResult.DROPPED_BUFFER_FULL
        st.buffer.append(pkt)
        st.bytes_resident += size
        if not self._busy and ho is None:
            self._start_service()
        return EnqueueResult.ACCEPTED

    def _drop(self, pkt: Packet, reason: str) -> None:
        st = self.state
        st.bytes_dropped += pkt.size
        st.drops_by_reason[reason] = st.drops_by_reason.get(reason, 0) + pkt.size
        self._record(tr.DROP, pkt.seq, pkt.size, reason)

    def _start_service(self) -> None:
        pkt = self.state.buffer[0]
        now = self.sim.now()
        rate = self.phy.slot_rate(now)
        dt = math.ceil(pkt.size * 8 / rate)  # Mbps == bits per µs
        self._busy = True
        self._gen += 1
        self.sim.at(now + dt, EventKind.TIMER, self._service_done, self._gen)

    def _service_done(self, gen: int) -> None:
        if gen != self._gen:
            return  # interrupted by a handover
        st = self.state
        pkt = st.buffer.popleft()
        st.bytes_resident -= pkt.size
        st.bytes_delivered += pkt.size
        self._busy = False
        self._record(tr.LINK_DELIVER, pkt.seq, pkt.size, "")
        if st.buffer:
            self._start_service()
        self._deliver(pkt)


def apply_handover(ev: HandoverEvent, link: Link) -> None:
    """Halt the link for ``ev`` and apply its buffer semantics at ``ho_start``."""
    st = link.state
    st.in_handover = ev
    st.current_phy_rate = 0.0
    link.handovers_applied.append(ev)
    link._record(tr.HO_START, len(link.handovers_applied) - 1, 0, ev.kind.value)
    link._record(tr.PHY_RATE, 0, 0, "0.0")
    if link._busy:
        link._gen += 1  # packet in service stays at the head and is re-sent later
        link._busy = False
    if ev.kind is HandoverKind.TYPE_III:
        while st.buffer:
            pkt = st.buffer.popleft()
            st.bytes_resident -= pkt.size
            link._drop(pkt, "handover")
    else:
        st.bytes_forwarded += st.bytes_resident
