from ..packet import MSS, Packet
from .base import CongestionController, RateSample
from .bbr import Bbr, BbrPlus, BbrPlusState, BbrState, bbr_update_filters, bbrplus_rtprop, make_controller
from .cubic import Cubic, CubicState, cubic_window
from .endpoints import Receiver, Sender
from .filters import WindowedFilter, ewma_time_decay

__all__ = [
    "MSS", "Packet", "CongestionController", "RateSample", "Bbr", "BbrPlus", "BbrState",
    "BbrPlusState", "bbr_update_filters", "bbrplus_rtprop", "make_controller", "Cubic",
    "CubicState", "cubic_window", "Receiver", "Sender", "WindowedFilter", "ewma_time_decay",
]
