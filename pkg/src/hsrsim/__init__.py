"""Packet-level simulator of a bulk TCP flow over a high-speed-rail LTE link."""

__version__ = "0.1.0"
