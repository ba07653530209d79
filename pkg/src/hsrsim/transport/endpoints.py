"""Bulk-transfer sender and cumulative-ACK receiver."""

from __future__ import annotations

import heapq
from typing import Callable, Optional

from .. import trace as tr
from ..engine import US_PER_MS, US_PER_S, EventKind, Simulator
from ..packet import MSS, Packet
from .base import CongestionController, RateSample

INFLIGHT = 0
SACKED = 1
LOST = 2

DUP_THRESH = 3
MIN_RTO_US = 200 * US_PER_MS
INIT_RTO_US = 1 * US_PER_S
MAX_RTO_US = 60 * US_PER_S


class Receiver:
    """Reassembles the byte stream and emits one cumulative ACK per packet.

    Each ACK also names the segment that triggered it, which is the
    SACK-like signal the sender's loss detection runs on.
    """

    def __init__(self) -> None:
        self.expected = 0
        self._held: dict = {}  # seq -> (size, arrival time)
        self.ood: list = []  # (seq, out-of-order delay µs), in release order
        self.duplicates = 0

    @property
    def in_order_bytes(self) -> int:
        return self.expected

    def on_packet(self, pkt: Packet, now: int) -> tuple:
        """Returns ``(ack_seq, released)``; ``released`` lists ``(seq, ood_delay)``."""
        seq = pkt.seq
        released = []
        if seq < self.expected or seq in self._held:
            self.duplicates += 1
            return self.expected, released
        if seq > self.expected:
            self._held[seq] = (pkt.size, now)
            return self.expected, released
        self.expected = seq + pkt.size
        released.append((seq, 0))
        held = self._held
        while held:
            nxt = held.pop(self.expected, None)
            if nxt is None:
                break
            released.append((self.expected, now - nxt[1]))
            self.expected += nxt[0]
        self.ood.extend(released)
        return self.expected, released


class Sender:
    def __init__(self, sim: Simulator, cc: CongestionController, transmit: Callable[[Packet], None],
                 trace: Optional[tr.FlowTrace] = None, mss: int = MSS,
                 flow_size: Optional[int] = None, min_rto: int = MIN_RTO_US) -> None:
        self.sim = sim
        self.cc = cc
        self.mss = mss
        self.flow_size = flow_size
        self._transmit = transmit
        self._rec = trace.records.append if trace is not None else None

        self.next_seq = 0
        self.snd_una = 0
        self.pipe = 0
        self._pkt: dict = {}
        self._state: dict = {}
        self._ever_retx: set = set()
        self._retx_heap: list = []
        self.highest_sacked = -1
        self._scan = 0

        self.in_recovery = False
        self.recovery_point = 0

        self.delivered = 0
        self.delivered_time = 0
        self.first_sent_time = 0

        self.srtt: Optional[float] = None
        self.rttvar = 0.0
        self.min_rto = min_rto
        self.rto = INIT_RTO_US
        self.backoff = 0
        self._rto_deadline: Optional[int] = None
        self._rto_armed = False

        self._next_send_time = 0
        self._send_timer_pending = False

        self.packets_sent = 0
        self.retransmits = 0
        self.rto_count = 0
        self.loss_events = 0
        # test hook: called as on_send(now, pipe_after_send, cwnd)
        self.on_send: Optional[Callable[[int, int, int], None]] = None

    # helpers

    def _has_new_data(self) -> bool:
        return self.flow_size is None or self.next_seq < self.flow_size

    def done(self) -> bool:
        return self.flow_size is not None and self.snd_una >= self.flow_size

    def _current_rto(self) -> int:
        return min(self.rto << self.backoff, MAX_RTO_US)

    def _arm_rto(self, restart: bool = False) -> None:
        if self.snd_una >= self.next_seq:
            self._rto_deadline = None
            return
        if restart or self._rto_deadline is None:
            self._rto_deadline = self.sim.now() + self._current_rto()
        if not self._rto_armed:
            self._rto_armed = True
            self.sim.at(self._rto_deadline, EventKind.TIMER, self._rto_fire)

    def _rto_fire(self) -> None:
        self._rto_armed = False
        deadline = self._rto_deadline
        if deadline is None:
            return
        now = self.sim.now()
        if now < deadline:
            self._rto_armed = True
            self.sim.at(deadline, EventKind.TIMER, self._rto_fire)
            return
        self._on_timeout(now)

    def _update_rtt(self, rtt: int) -> None:
        if self.srtt is None:
            self.srtt = float(rtt)
            self.rttvar = rtt / 2.0
        else:
            self.rttvar = 0.75 * self.rttvar + 0.25 * abs(self.srtt - rtt)
            self.srtt = 0.875 * self.srtt + 0.125 * rtt
        self.rto = max(self.min_rto, int(self.srtt + max(1000.0, 4.0 * self.rttvar)))

    # sending

    def start(self) -> None:
        self.try_send()

    def _send_timer(self) -> None:
        self._send_timer_pending = False
        self.try_send()

    def _peek_retx(self) -> Optional[int]:
        heap = self._retx_heap
        state = self._state
        while heap:
            seq = heap[0]
            if state.get(seq) == LOST:
                return seq
            heapq.heappop(heap)
        return None

    def try_send(self) -> None:
        sim = self.sim
        cc = self.cc
        while True:
            now = sim.now()
            rate = cc.pacing_rate
            if rate is not None and now < self._next_send_time:
                if not self._send_timer_pending:
                    self._send_timer_pending = True
                    sim.at(self._next_send_time, EventKind.APP_SEND, self._send_timer)
                return
            seq = self._peek_retx()
            if seq is not None:
                size = self._pkt[seq].size
                is_retx = True
            elif self._has_new_data():
                seq = self.next_seq
                size = self.mss if self.flow_size is None else min(self.mss, self.flow_size - seq)
                is_retx = False
            else:
                return
            if self.pipe + size > cc.cwnd:
                return
            if is_retx:
                heapq.heappop(self._retx_heap)
                self._ever_retx.add(seq)
                self.retransmits += 1
            else:
                self.next_seq += size
            self._send(seq, size, is_retx, now)
            if rate is not None and rate > 0:
                self._next_send_time = max(self._next_send_time, now) + int(size * 8 / rate)

    def _send(self, seq: int, size: int, is_retx: bool, now: int) -> None:
        if self.pipe == 0:
            # nothing in flight: restart the delivery-rate clock
            self.first_sent_time = now
            self.delivered_time = now
        pkt = Packet(seq, size, now, is_retx, self.delivered, self.delivered_time, self.first_sent_time)
        self._pkt[seq] = pkt
        self._state[seq] = INFLIGHT
        self.pipe += size
        self.packets_sent += 1
        if self._rec is not None:
            self._rec(tr.Record(now, tr.SEND, seq, size, str(self.pipe)))
        if self.on_send is not None:
            self.on_send(now, self.pipe, self.cc.cwnd)
        self._transmit(pkt)
        self._arm_rto()

    # acknowledgements

    def on_ack(self, ack: tuple) -> None:
        ack_seq, sacked_seq = ack
        now = self.sim.now()
        state = self._state
        pkts = self._pkt
        rtt = None
        rs = None
        acked = 0
        st = state.get(sacked_seq)
        p = pkts.get(sacked_seq)
        if self._rec is not None:
            self._rec(tr.Record(now, tr.ACK, sacked_seq, p.size if p is not None else 0, str(ack_seq)))
        if st is not None and st != SACKED:
            if st == INFLIGHT:
                self.pipe -= p.size
            state[sacked_seq] = SACKED
            acked = p.size
            self.delivered += acked
            self.delivered_time = now
            if p.sent_at > self.first_sent_time:
                self.first_sent_time = p.sent_at
            interval = max(p.sent_at - p.first_sent_time, now - p.delivered_time)
            if interval > 0:
                d = self.delivered - p.delivered
                rs = RateSample(d * 8 / interval, interval, d, p.delivered)
            if sacked_seq not in self._ever_retx:
                rtt = now - p.sent_at
                self._update_rtt(rtt)
            if sacked_seq > self.highest_sacked:
                self.highest_sacked = sacked_seq

        if ack_seq > self.snd_una:
            s = self.snd_una
            while s < ack_seq:
                st = state.pop(s, None)
                q = pkts.pop(s, None)
                if q is None:
                    s += self.mss
                    continue
                if st == INFLIGHT:
                    self.pipe -= q.size
                if st != SACKED:
                    acked += q.size
                    self.delivered += q.size
                s += q.size
            self.snd_una = ack_seq
            self.backoff = 0
            if self.in_recovery and self.snd_una >= self.recovery_point:
                self.in_recovery = False
            self._arm_rto(restart=True)

        if self._detect_losses() and not self.in_recovery:
            self.in_recovery = True
            self.recovery_point = self.next_seq
            self.loss_events += 1
            self.cc.on_loss(now)

        self.cc.on_ack(now, rtt, acked, rs, self.pipe, self.in_recovery)
        self.try_send()

    def _detect_losses(self) -> bool:
        """Mark a segment lost once ``DUP_THRESH`` segments above it were acked."""
        limit = self.highest_sacked - DUP_THRESH * self.mss
        if self._scan < self.snd_una:
            self._scan = self.snd_una
        found = False
        state = self._state
        while self._scan <= limit:
            s = self._scan
            q = self._pkt.get(s)
            if q is None:
                self._scan += self.mss
                continue
            if state[s] == INFLIGHT and s not in self._ever_retx:
                state[s] = LOST
                self.pipe -= q.size
                heapq.heappush(self._retx_heap, s)
                found = True
            self._scan += q.size
        return found

    def _on_timeout(self, now: int) -> None:
        if self.snd_una >= self.next_seq:
            self._rto_deadline = None
            return
        self.rto_count += 1
        self.backoff += 1
        state = self._state
        heap = []
        for s, st in state.items():
            if st != SACKED:
                state[s] = LOST
                heap.append(s)
        heapq.heapify(heap)
        self._retx_heap = heap
        self.pipe = 0
        self._ever_retx.update(heap)
        self.in_recovery = True
        self.recovery_point = self.next_seq
        self.cc.on_rto(now, self.backoff)
        self._next_send_time = now
        self._rto_deadline = now + self._current_rto()
        self._arm_rto()
        self.try_send()
