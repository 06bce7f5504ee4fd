"""Redirection-attack catalogue and the timed attack schedule.

Attack specs are routing mutations ``target -> new_dest``. A plan wraps
one spec in the standard run shape: 20 minutes normal, 5 minutes under
attack, 10 minutes normal again.
"""

from __future__ import annotations

from dataclasses import dataclass

from .nodes import (
    EDGES,
    ROUTERS,
    A,
    C,
    NodeId,
    Role,
    ScenarioFamily,
    Topology,
    restore_normal,
    set_destination,
)

MINUTE = 60.0

#: Scenario II's attack column, verbatim; R2 -> R3 is deliberately absent.
_SCENARIO_II_PAIRS: tuple[tuple[NodeId, NodeId], ...] = (
    (ROUTERS[0], ROUTERS[1]),
    (ROUTERS[0], ROUTERS[2]),
    (ROUTERS[1], ROUTERS[0]),
    (ROUTERS[2], ROUTERS[0]),
    (ROUTERS[2], C),
)


@dataclass(frozen=True)
class AttackSpec:
    scenario: ScenarioFamily
    target: NodeId
    new_dest: NodeId

    def __post_init__(self) -> None:
        if self.scenario is ScenarioFamily.I and self.target.role is not Role.EDGE:
            raise ValueError("scenario I targets edge devices")
        if self.scenario is ScenarioFamily.II and self.target.role is not Role.ROUTER:
            raise ValueError("scenario II targets routers")
        if self.scenario is ScenarioFamily.III and self.new_dest != A:
            raise ValueError("scenario III redirects to the attacker")

    def token(self) -> str:
        return f"{self.target}>{self.new_dest}"


@dataclass(frozen=True)
class AttackPlan:
    """One attack spec placed inside the 20/5/10-minute run schedule."""

    spec: AttackSpec
    normal_before: float = 20 * MINUTE
    attack_window: float = 5 * MINUTE
    normal_after: float = 10 * MINUTE

    @property
    def total_duration(self) -> float:
        return self.normal_before + self.attack_window + self.normal_after

    @property
    def attack_interval(self) -> tuple[float, float]:
        return (self.normal_before, self.normal_before + self.attack_window)

    def active_at(self, now: float) -> bool:
        start, end = self.attack_interval
        return start <= now < end


def enumerate_attacks(scenario: ScenarioFamily) -> list[AttackSpec]:
    """All attack specs of a scenario: 12 for I, 5 for II, 7 for III."""
    if scenario is ScenarioFamily.I:
        normal = {EDGES[0]: ROUTERS[0], EDGES[1]: ROUTERS[0],
                  EDGES[2]: ROUTERS[2], EDGES[3]: ROUTERS[1]}
        specs = []
        for edge in EDGES:
            for dest in [r for r in ROUTERS if r != normal[edge]] + [C]:
                specs.append(AttackSpec(scenario, edge, dest))
        return specs
    if scenario is ScenarioFamily.II:
        return [AttackSpec(scenario, t, d) for t, d in _SCENARIO_II_PAIRS]
    return [AttackSpec(scenario, node, A) for node in EDGES + ROUTERS]


def apply_plan(topology: Topology, plan: AttackPlan, now: float) -> Topology:
    """Topology as seen at simulation time ``now`` (seconds from run start)."""
    if plan.active_at(now):
        base = restore_normal(topology)
        return set_destination(base, plan.spec.target, plan.spec.new_dest)
    return restore_normal(topology)


@dataclass(frozen=True)
class WindowLabel:
    window_index: int
    attack: bool


def label_windows(plan: AttackPlan, window_len: float = MINUTE) -> list[WindowLabel]:
    """Ground-truth labels for tumbling windows over the plan's run.

    A window is an attack window iff its [start, end) interval overlaps
    the attack interval at all (any-overlap labeling).
    """
    if window_len <= 0:
        raise ValueError("window length must be positive")
    if not (MINUTE % window_len == 0 or window_len % MINUTE == 0):
        raise ValueError("window length must divide evenly into minutes")
    a_start, a_end = plan.attack_interval
    labels = []
    count = int(-(-plan.total_duration // window_len))
    for i in range(count):
        w_start, w_end = i * window_len, (i + 1) * window_len
        overlap = w_start < a_end and a_start < w_end and a_end > a_start
        labels.append(WindowLabel(i, overlap))
    return labels
