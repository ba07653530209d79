from __future__ import annotations

from dataclasses import dataclass

MSS = 1448


@dataclass(slots=True)
class Packet:
    """One transmission of a data segment.

    A retransmission is a new ``Packet`` with the same ``seq`` and
    ``is_retx=True``; ``sent_at`` is therefore set exactly once per object.
    The ``delivered*`` / ``first_sent_time`` fields snapshot the sender's
    delivery-rate state at send time.
    """

    seq: int
    size: int = MSS
    sent_at: int = -1
    is_retx: bool = False
    delivered: int = 0
    delivered_time: int = 0
    first_sent_time: int = 0
