"""Flow metrics and handover-centric analyses over a FlowTrace.

Everything here is a pure function of one or more traces, so the same code
runs on simulated traces and on traces imported from CSV.

Rate series come in two flavours (``source``):

``"delivered"``
    bytes the radio link actually handed to the UE, binned in time. This is
    what a transport-block counter on the handset measures, and it is the
    default for the handover analyses.
``"capacity"``
    the link's offered PHY rate from ``phy-rate`` records.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import trace as tr
from .engine import US_PER_S
from .link import HandoverKind
from .trace import FlowTrace

DELIVERED = "delivered"
CAPACITY = "capacity"


class MetricsError(ValueError):
    pass


class DegenerateFitError(MetricsError):
    """Sample residuals have zero variance; no compensation is needed."""


# HO_start inference


def infer_ho_start(downlink_packet_times: Sequence[int], ho_end: int) -> int:
    """Latest downlink packet time strictly before ``ho_end``.

    ``downlink_packet_times`` must be sorted ascending.
    """
    i = bisect.bisect_left(downlink_packet_times, ho_end)
    if i == 0:
        raise MetricsError(f"no downlink packet before ho_end={ho_end}us (trace starts mid-handover?)")
    return downlink_packet_times[i - 1]


@dataclass(frozen=True)
class HandoverSpan:
    index: int
    kind: str
    ho_start: int
    ho_end: int


def handovers(trace: FlowTrace, infer_start: bool = False) -> list:
    """Completed handovers in ``trace``.

    With ``infer_start`` the recorded start is replaced by the last
    link-delivery before ``ho_end``.
    """
    out = []
    open_ = None
    for r in trace.records:
        if r.kind == tr.HO_START:
            open_ = r
        elif r.kind == tr.HO_END and open_ is not None:
            out.append(HandoverSpan(r.seq, r.extra, open_.t, r.t))
            open_ = None
    if infer_start:
        times = [r.t for r in trace.records if r.kind == tr.LINK_DELIVER]
        inferred = []
        for h in out:
            try:
                start = infer_ho_start(times, h.ho_end)
            except MetricsError:
                continue
            inferred.append(HandoverSpan(h.index, h.kind, start, h.ho_end))
        out = inferred
    return out


# rate series


class RateSeries:
    """Cumulative-bytes view of a trace supporting O(log n) interval means."""

    def __init__(self, trace: FlowTrace, source: str = DELIVERED) -> None:
        self.duration = trace.duration_us
        self.source = source
        if source == DELIVERED:
            pts = [(r.t, r.nbytes) for r in trace.records if r.kind == tr.LINK_DELIVER]
            self._t = np.array([p[0] for p in pts], dtype=np.int64)
            self._cum = np.concatenate([[0.0], np.cumsum([p[1] for p in pts], dtype=np.float64)])
        elif source == CAPACITY:
            steps = [(r.t, float(r.extra)) for r in trace.records if r.kind == tr.PHY_RATE]
            if not steps or steps[0][0] > 0:
                steps.insert(0, (0, 0.0))
            # keep the last value written at each timestamp
            t_list, v_list = [], []
            for t, v in steps:
                if t_list and t_list[-1] == t:
                    v_list[-1] = v
                else:
                    t_list.append(t)
                    v_list.append(v)
            self._t = np.array(t_list, dtype=np.int64)
            self._v = np.array(v_list, dtype=np.float64)
            seg = np.diff(self._t) * self._v[:-1] / 8.0  # Mbps * us / 8 = bytes
            self._cum = np.concatenate([[0.0], np.cumsum(seg)])
        else:
            raise MetricsError(f"unknown rate source {source!r}")

    def bytes_before(self, t: float) -> float:
        """Bytes in [0, t)."""
        if self.source == DELIVERED:
            return float(self._cum[np.searchsorted(self._t, t, side="left")])
        i = int(np.searchsorted(self._t, t, side="right")) - 1
        if i < 0:
            return 0.0
        return float(self._cum[i] + (t - self._t[i]) * self._v[i] / 8.0)

    def bytes_between(self, a: float, b: float) -> float:
        return self.bytes_before(b) - self.bytes_before(a)

    def mean_rate(self, a: float, b: float) -> float:
        """Mean rate in Mbps over [a, b)."""
        if not b > a:
            raise MetricsError(f"empty interval [{a}, {b})")
        return self.bytes_between(a, b) * 8.0 / (b - a)

    def total_bytes(self) -> float:
        return self.bytes_before(self.duration)


def ensemble_mean_rate(traces: Iterable[FlowTrace], source: str = DELIVERED,
                       exclude_handovers: bool = False) -> float:
    """Pooled mean rate (Mbps) over every trace in the ensemble."""
    total_bytes = 0.0
    total_time = 0.0
    for t in traces:
        rs = RateSeries(t, source)
        total_bytes += rs.total_bytes()
        span = float(t.duration_us)
        if exclude_handovers:
            for h in handovers(t):
                lo, hi = max(0, h.ho_start), min(t.duration_us, h.ho_end)
                if hi > lo:
                    total_bytes -= rs.bytes_between(lo, hi)
                    span -= hi - lo
        total_time += span
    if total_time <= 0:
        raise MetricsError("ensemble has zero duration")
    mean = total_bytes * 8.0 / total_time
    if mean <= 0:
        raise MetricsError("ensemble mean rate is zero")
    return mean


def normalized_rate(trace: FlowTrace, interval: tuple, ensemble: Optional[Sequence[FlowTrace]] = None,
                    source: str = DELIVERED, exclude_handovers: bool = False) -> float:
    t1, t2 = interval
    if not t1 < t2:
        raise MetricsError("interval needs t1 < t2")
    denom = ensemble_mean_rate(ensemble if ensemble is not None else [trace], source, exclude_handovers)
    return RateSeries(trace, source).mean_rate(t1, t2) / denom


# handover-centric curves


@dataclass
class ImpactCurve:
    kind: str
    t: np.ndarray  # bin start after ho_end, seconds
    ratio: np.ndarray
    origin: float
    count: int

    def to_rows(self) -> list:
        rows = [(0.0, self.origin, "origin")]
        rows.extend((float(a), float(b), "bin") for a, b in zip(self.t, self.ratio))
        return rows


@dataclass
class NearEffectCurve:
    ho_kind: str
    window_x: np.ndarray  # seconds
    ratio: np.ndarray
    count: int = 0

    def to_rows(self) -> list:
        return [(float(a), float(b)) for a, b in zip(self.window_x, self.ratio)]


def _select(traces: Sequence[FlowTrace], kind: str, infer_start: bool) -> list:
    out = []
    for tr_ in traces:
        spans = [h for h in handovers(tr_, infer_start) if h.kind == kind]
        if spans:
            out.append((tr_, spans))
    return out


def _pooled(nbytes: np.ndarray, span_us: np.ndarray, denom: float) -> np.ndarray:
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(span_us > 0, nbytes * 8.0 / np.maximum(span_us, 1) / denom, np.nan)


def instantaneous_impact(traces: Sequence[FlowTrace], kind: str, bin_s: float = 0.2,
                         horizon_s: float = 10.0, source: str = DELIVERED,
                         infer_start: bool = False, exclude_handovers: bool = False) -> ImpactCurve:
    """Normalized rate in consecutive bins after each handover of ``kind``.

    Handovers are aligned at ``ho_end``. The origin point covers the outage
    together with the first bin, ``[ho_start, ho_end + bin)``, which is where
    data retained across the handover shows up. Each point pools bytes and
    time over all handovers, like the ensemble denominator does.
    """
    kind = HandoverKind.parse(kind).value
    nbins = int(round(horizon_s / bin_s))
    starts = np.arange(nbins) * bin_s
    selected = _select(traces, kind, infer_start)
    if not selected:
        return ImpactCurve(kind, starts, np.full(nbins, np.nan), float("nan"), 0)
    denom = ensemble_mean_rate(traces, source, exclude_handovers)
    b_us = bin_s * US_PER_S
    nbytes = np.zeros(nbins)
    span = np.zeros(nbins)
    o_bytes = o_span = 0.0
    n = 0
    for tr_, spans in selected:
        rs = RateSeries(tr_, source)
        for h in spans:
            n += 1
            end = min(h.ho_end + b_us, tr_.duration_us)
            if end > h.ho_start:
                o_bytes += rs.bytes_between(h.ho_start, end)
                o_span += end - h.ho_start
            for j in range(nbins):
                a = h.ho_end + j * b_us
                if a + b_us > tr_.duration_us:
                    break
                nbytes[j] += rs.bytes_between(a, a + b_us)
                span[j] += b_us
    origin = float(_pooled(np.array([o_bytes]), np.array([o_span]), denom)[0])
    return ImpactCurve(kind, starts, _pooled(nbytes, span, denom), origin, n)


def near_effect(traces: Sequence[FlowTrace], kind: str, x_grid: Sequence[float],
                source: str = DELIVERED, infer_start: bool = False,
                exclude_handovers: bool = False) -> NearEffectCurve:
    """Normalized rate over ``[ho_start, ho_end + x]`` for each ``x``.

    Bytes and time are pooled over all handovers of the kind, so a long
    outage weighs in proportion to its length.
    """
    kind = HandoverKind.parse(kind).value
    xs = np.asarray(list(x_grid), dtype=float)
    selected = _select(traces, kind, infer_start)
    if not selected:
        return NearEffectCurve(kind, xs, np.full(len(xs), np.nan), 0)
    denom = ensemble_mean_rate(traces, source, exclude_handovers)
    nbytes = np.zeros(len(xs))
    span = np.zeros(len(xs))
    n = 0
    for tr_, spans in selected:
        rs = RateSeries(tr_, source)
        for h in spans:
            n += 1
            for i, x in enumerate(xs):
                b = h.ho_end + x * US_PER_S
                if b > tr_.duration_us or b <= h.ho_start:
                    continue
                nbytes[i] += rs.bytes_between(h.ho_start, b)
                span[i] += b - h.ho_start
    return NearEffectCurve(kind, xs, _pooled(nbytes, span, denom), n)


# per-flow summary


def percentiles(values, qs) -> dict:
    if len(values) == 0:
        return {f"p{q}": None for q in qs}
    arr = np.percentile(np.asarray(values, dtype=float), qs)
    return {f"p{q}": float(v) for q, v in zip(qs, arr)}


@dataclass
class Summary:
    duration_s: float
    goodput_mbps: float
    throughput_mbps: float
    packets_sent: int
    packets_lost: int
    retransmissions: int
    plr_pct: float
    rtt_ms: dict
    bif_bytes: dict
    ood_ms: dict
    ood_nonzero_pct: float
    rtt_samples_ms: np.ndarray = field(repr=False, default=None)
    bif_series: np.ndarray = field(repr=False, default=None)  # (t_us, bytes) rows
    ood_samples_ms: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("rtt_samples_ms", "bif_series", "ood_samples_ms"):
            d.pop(k)
        return d


PCTS = (5, 25, 50, 75, 95, 99)


def replay_receiver(trace: FlowTrace) -> tuple:
    """Reassemble link deliveries: returns (in-order bytes, OOD delays in µs)."""
    expected = 0
    held: dict = {}
    ood = []
    for r in trace.records:
        if r.kind != tr.LINK_DELIVER:
            continue
        seq = r.seq
        if seq < expected or seq in held:
            continue
        if seq > expected:
            held[seq] = (r.nbytes, r.t)
            continue
        expected = seq + r.nbytes
        ood.append(0)
        while held:
            nxt = held.pop(expected, None)
            if nxt is None:
                break
            ood.append(r.t - nxt[1])
            expected += nxt[0]
    return expected, ood


def rtt_samples(trace: FlowTrace) -> np.ndarray:
    """RTT (ms) per acked segment, skipping any segment ever retransmitted."""
    last_send: dict = {}
    retx: set = set()
    out = []
    for r in trace.records:
        if r.kind == tr.SEND:
            if r.seq in last_send:
                retx.add(r.seq)
            last_send[r.seq] = r.t
        elif r.kind == tr.ACK:
            s = r.seq
            if s in last_send and s not in retx:
                out.append((r.t - last_send.pop(s)) / 1000.0)
    return np.asarray(out, dtype=float)


def summarize(trace: FlowTrace) -> Summary:
    if trace.duration_us <= 0:
        raise MetricsError("zero-duration trace")
    dur_s = trace.duration_us / US_PER_S
    sends = 0
    seen: set = set()
    retx = 0
    drops = 0
    link_bytes = 0
    bif = []
    for r in trace.records:
        k = r.kind
        if k == tr.SEND:
            sends += 1
            if r.seq in seen:
                retx += 1
            else:
                seen.add(r.seq)
            if r.extra:
                bif.append((r.t, int(r.extra)))
        elif k == tr.DROP:
            drops += 1
        elif k == tr.LINK_DELIVER:
            link_bytes += r.nbytes
    in_order, ood = replay_receiver(trace)
    rtts = rtt_samples(trace)
    bif_arr = np.asarray(bif, dtype=np.int64).reshape(-1, 2)
    ood_ms = np.asarray(ood, dtype=float) / 1000.0
    bif_stats = percentiles(bif_arr[:, 1], PCTS)
    bif_stats["mean"] = float(bif_arr[:, 1].mean()) if len(bif_arr) else None
    rtt_stats = percentiles(rtts, PCTS)
    rtt_stats["mean"] = float(rtts.mean()) if len(rtts) else None
    ood_stats = percentiles(ood_ms, PCTS)
    ood_stats["mean"] = float(ood_ms.mean()) if len(ood_ms) else None
    return Summary(
        duration_s=dur_s,
        goodput_mbps=in_order * 8.0 / trace.duration_us,
        throughput_mbps=link_bytes * 8.0 / trace.duration_us,
        packets_sent=sends,
        packets_lost=drops,
        retransmissions=retx,
        plr_pct=100.0 * drops / sends if sends else 0.0,
        rtt_ms=rtt_stats,
        bif_bytes=bif_stats,
        ood_ms=ood_stats,
        ood_nonzero_pct=100.0 * float(np.count_nonzero(ood_ms)) / len(ood_ms) if len(ood_ms) else 0.0,
        rtt_samples_ms=rtts,
        bif_series=bif_arr,
        ood_samples_ms=ood_ms,
    )


# shifted-gamma RTT model


@dataclass(frozen=True)
class GammaFit:
    shift: float
    alpha: float
    beta_scale: float
    n: int

    @property
    def mean(self) -> float:
        return self.shift + self.alpha * self.beta_scale

    @property
    def var(self) -> float:
        return self.alpha * self.beta_scale ** 2

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.shift + rng.gamma(self.alpha, self.beta_scale, size)


def fit_shifted_gamma(samples: Sequence[float], min_samples: int = 30) -> GammaFit:
    """Method-of-moments shifted-gamma fit; the shift is the sample minimum.

    By construction ``shift + sqrt(alpha * var)`` equals the sample mean.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < min_samples:
        raise MetricsError(f"need at least {min_samples} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise MetricsError("samples must be finite")
    shift = float(x.min())
    resid = x - shift
    m = float(resid.mean())
    v = float(resid.var())
    if v <= 0.0 or m <= 0.0:
        raise DegenerateFitError("zero-variance samples")
    return GammaFit(shift=shift, alpha=m * m / v, beta_scale=v / m, n=int(x.size))
