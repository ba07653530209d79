"""One simulated bulk TCP flow over the LTE link model."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .engine import US_PER_MS, EventKind, RngStream, Simulator, seconds
from .link import Link, LinkProfile, PhyProcess, sample_handover_schedule
from .trace import FlowTrace
from .transport.base import CongestionController
from .transport.bbr import make_controller
from .transport.endpoints import Receiver, Sender


@dataclass
class CcaSpec:
    name: str = "cubic"
    params: dict = field(default_factory=dict)

    def build(self) -> CongestionController:
        return make_controller(self.name, **dict(self.params))

    def label(self) -> str:
        if not self.params:
            return self.name
        inner = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.name}({inner})"


@dataclass
class FlowRun:
    trace: FlowTrace
    sim: Simulator
    link: Link
    sender: Sender
    receiver: Receiver
    schedule: list
    phy: PhyProcess


def build_flow(profile: LinkProfile, cca: CcaSpec, seed: int, duration: float = 150.0,
               flow_size: Optional[int] = None, record: bool = True) -> FlowRun:
    """Wire engine, link, endpoints and RNG streams for one run (not started)."""
    horizon = seconds(duration)
    sim = Simulator()
    trace = FlowTrace() if record else None
    schedule = sample_handover_schedule(profile, horizon, RngStream(seed, "handover"))
    phy = PhyProcess(profile, horizon, RngStream(seed, "phy"), schedule)
    owd = int(round(profile.base_owd * US_PER_MS))
    receiver = Receiver()
    cc = cca.build()
    sender_ref: list = []

    def ack_arrival(ack: tuple) -> None:
        sender_ref[0].on_ack(ack)
        if sender_ref[0].done():
            sim.stop()

    def deliver(pkt) -> None:
        now = sim.now()
        ack_seq, _ = receiver.on_packet(pkt, now)
        sim.at(now + owd, EventKind.PACKET_ARRIVAL, ack_arrival, (ack_seq, pkt.seq))

    link = Link(sim, profile, phy, RngStream(seed, "loss"), deliver, trace)

    def transmit(pkt) -> None:
        sim.at(sim.now() + owd, EventKind.PACKET_ARRIVAL, link.enqueue, pkt)

    sender = Sender(sim, cc, transmit, trace, flow_size=flow_size)
    sender_ref.append(sender)
    link.install(schedule, horizon)
    sim.at(0, EventKind.APP_SEND, sender.start)
    return FlowRun(trace if trace is not None else FlowTrace(), sim, link, sender, receiver, schedule, phy)


def simulate(profile: LinkProfile, cca: CcaSpec, seed: int, duration: float = 150.0,
             flow_size: Optional[int] = None, record: bool = True) -> FlowRun:
    run = build_flow(profile, cca, seed, duration, flow_size, record)
    run.sim.run_until(seconds(duration))
    run.trace.duration_us = run.sim.now()
    return run
