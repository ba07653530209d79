"""FlowTrace: the timestamped record stream every metric is computed from.

CSV schema, one record per line::

    t_us,kind,seq,bytes,extra

preceded by a ``# duration_us=<int>`` comment line. Per-kind meaning of the
``seq`` / ``bytes`` / ``extra`` columns:

=============  =================  ============  ===============================
kind           seq                bytes         extra
=============  =================  ============  ===============================
send           segment seq        size          sender bytes-in-flight after send
link-deliver   segment seq        size          (empty)
ack            acked segment seq  size          cumulative ack number
drop           segment seq        size          random | buffer | handover | outage
phy-rate       0                  0             link capacity in Mbps
ho-start       handover index     0             I | II | III
ho-end         handover index     0             I | II | III
=============  =================  ============  ===============================

A ``send`` whose seq was already sent earlier is a retransmission.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Union

SEND = "send"
LINK_DELIVER = "link-deliver"
ACK = "ack"
DROP = "drop"
PHY_RATE = "phy-rate"
HO_START = "ho-start"
HO_END = "ho-end"

KINDS = (SEND, LINK_DELIVER, ACK, DROP, PHY_RATE, HO_START, HO_END)
HEADER = ("t_us", "kind", "seq", "bytes", "extra")


class Record(NamedTuple):
    t: int
    kind: str
    seq: int
    nbytes: int
    extra: str


class TraceFormatError(ValueError):
    pass


@dataclass
class FlowTrace:
    records: list = field(default_factory=list)
    duration_us: int = 0

    def add(self, t: int, kind: str, seq: int = 0, nbytes: int = 0, extra: object = "") -> None:
        self.records.append(Record(t, kind, seq, nbytes, str(extra)))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Record]:
        return iter(self.records)

    def of_kind(self, *kinds: str) -> list:
        ks = set(kinds)
        return [r for r in self.records if r.kind in ks]

    def validate(self) -> None:
        last = 0
        open_ho = None
        for r in self.records:
            if r.kind not in KINDS:
                raise TraceFormatError(f"unknown record kind {r.kind!r} at t={r.t}")
            if r.t < last:
                raise TraceFormatError(f"records out of order at t={r.t}")
            last = r.t
            if r.kind == HO_START:
                if open_ho is not None:
                    raise TraceFormatError(f"ho-start at t={r.t} while handover {open_ho} open")
                open_ho = r.seq
            elif r.kind == HO_END:
                if open_ho is None:
                    raise TraceFormatError(f"ho-end at t={r.t} without ho-start")
                open_ho = None

    # serialization

    def write_csv(self, path: Union[str, os.PathLike]) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# duration_us={self.duration_us}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HEADER)
        w.writerows(self.records)
        return buf.getvalue()

    @classmethod
    def read_csv(cls, path: Union[str, os.PathLike]) -> "FlowTrace":
        with open(path, newline="") as fh:
            return cls.from_lines(fh)

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "FlowTrace":
        duration = None
        body = []
        for line in lines:
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("duration_us="):
                        duration = int(tok.split("=", 1)[1])
                continue
            body.append(line)
        reader = csv.reader(body)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != HEADER:
            raise TraceFormatError(f"expected header {','.join(HEADER)}, got {header}")
        records = []
        for row in reader:
            if not row:
                continue
            if len(row) != 5:
                raise TraceFormatError(f"bad row {row}")
            records.append(Record(int(row[0]), row[1], int(row[2]), int(row[3]), row[4]))
        trace = cls(records, duration if duration is not None else (records[-1].t if records else 0))
        trace.validate()
        return trace
