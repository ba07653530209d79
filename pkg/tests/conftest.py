import pytest

from hsrsim.engine import RngStream, Simulator
from hsrsim.link import Link, LinkProfile, PhyProcess
from hsrsim.trace import FlowTrace


def make_link(profile, schedule=(), horizon=10_000_000, seed=0, trace=None):
    """A bare link on a fresh simulator, collecting delivered packets in a list."""
    sim = Simulator()
    delivered = []
    phy = PhyProcess(profile, horizon, RngStream(seed, "phy"), schedule)
    link = Link(sim, profile, phy, RngStream(seed, "loss"), delivered.append, trace)
    link.install(schedule, horizon)
    return sim, link, delivered


@pytest.fixture
def flat_profile():
    return LinkProfile(speed=0, phy_rate_mean=8.0)


@pytest.fixture
def empty_trace():
    return FlowTrace()
