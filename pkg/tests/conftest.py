"""Shared fixtures and reference constants for the test suite."""

from datetime import datetime, timedelta

import pytest

from iotfed.logfmt import EntryKind, LogEntry, Segment
from iotfed.nodes import NodeId

# The three reference device-log examples, byte for byte.
EDGE_LINE = "E3 > R3, 2024-04-26 13:36:10.273312, S:0"
ROUTER_LINE = ("E3>R3,2024-04-26 13:36:10.273312, 2024-04-26 13:36:10.336880, "
               "R3>R2,2024-04-26 13:36:10.369257, S:0")
COORD_LINE = ("E3>R3,2024-04-26 13:36:10.273312, 2024-04-26 13:36:10.336880, "
              "R3>R2,2024-04-26 13:36:10.369257, 2024-04-26 13:36:10.488817, "
              "R2>C,2024-04-26 13:36:10.522766, 2024-04-26 13:36:10.787851")

# Delays derivable from the coordinator example's timestamps.
COORD_E2E_MS = 514.539
COORD_FIRST_HOP_MS = 63.568
COORD_HOPS = 3

T0 = datetime(2024, 4, 26, 13, 36, 10)


def ts(seconds: float) -> datetime:
    """Timestamp ``seconds`` after the reference instant."""
    return T0 + timedelta(seconds=seconds)


def coordinator_entry(origin: NodeId, path: list[NodeId], start: datetime,
                      hop_ms: float = 100.0) -> LogEntry:
    """A synthetic all-complete entry along ``origin -> path... -> C``."""
    segments = []
    t = start
    nodes = [origin] + path
    for src, dst in zip(nodes, nodes[1:]):
        sent = t
        received = t + timedelta(milliseconds=hop_ms)
        segments.append(Segment(src, dst, sent, received))
        t = received
    return LogEntry(EntryKind.COORDINATOR, tuple(segments))


@pytest.fixture(scope="session")
def small_sim():
    """A tiny deterministic normal-traffic run shared across tests."""
    from iotfed.nodes import ScenarioFamily, build_topology
    from iotfed.simkernel import SimConfig, run_simulation

    topology = build_topology(ScenarioFamily.III)
    cfg = SimConfig(seed=11, duration=120.0)
    return topology, cfg, run_simulation(topology, cfg)
