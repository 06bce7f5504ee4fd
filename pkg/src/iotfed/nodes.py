"""Hierarchical network model: node roster, routing tree, redirection state.

The standard roster is one coordinator (C), three routers (R1-R3), four
edge devices (E1-E4) and one attacker (A). The attacker is a routable
destination that never forwards (black hole).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

HOP_LIMIT = 8


class UnknownNode(KeyError):
    """Raised when a node token or NodeId is outside the topology."""


class InvalidRedirection(ValueError):
    """Raised for redirections that the model forbids."""


class Role(enum.Enum):
    COORDINATOR = "C"
    ROUTER = "R"
    EDGE = "E"
    ATTACKER = "A"


@dataclass(frozen=True)
class NodeId:
    """A node identity such as C, R2 or E4.

    Coordinator and attacker carry index 0 and render as bare letters.
    """

    role: Role
    index: int = 0

    def __post_init__(self) -> None:
        if self.role in (Role.COORDINATOR, Role.ATTACKER):
            if self.index != 0:
                raise ValueError(f"{self.role.value} carries no index")
        elif self.index < 1:
            raise ValueError("router/edge index must be >= 1")

    def __str__(self) -> str:
        if self.role in (Role.COORDINATOR, Role.ATTACKER):
            return self.role.value
        return f"{self.role.value}{self.index}"

    def sort_key(self) -> tuple[str, int]:
        return (self.role.value, self.index)

    @classmethod
    def parse(cls, token: str) -> "NodeId":
        token = token.strip()
        if token == "C":
            return C
        if token == "A":
            return A
        if len(token) >= 2 and token[0] in ("R", "E") and token[1:].isdigit():
            role = Role.ROUTER if token[0] == "R" else Role.EDGE
            return cls(role, int(token[1:]))
        raise UnknownNode(f"unrecognized node token {token!r}")


C = NodeId(Role.COORDINATOR)
A = NodeId(Role.ATTACKER)
R1, R2, R3 = (NodeId(Role.ROUTER, i) for i in (1, 2, 3))
E1, E2, E3, E4 = (NodeId(Role.EDGE, i) for i in (1, 2, 3, 4))

ROUTERS = (R1, R2, R3)
EDGES = (E1, E2, E3, E4)
ROSTER = (C, R1, R2, R3, E1, E2, E3, E4, A)


class ScenarioFamily(enum.Enum):
    """Baseline routing family; III homes R3 directly on C."""

    I = "I"
    II = "II"
    III = "III"


@dataclass(frozen=True)
class Topology:
    """Node roster plus baseline and live destination maps.

    ``current_dest`` equals ``normal_dest`` whenever no attack is active.
    Values are immutable; :func:`set_destination` returns an updated copy.
    """

    nodes: frozenset[NodeId]
    normal_dest: dict[NodeId, NodeId]
    current_dest: dict[NodeId, NodeId]
    pan_id: str = "PAN-1"

    def require(self, node: NodeId) -> None:
        if node not in self.nodes:
            raise UnknownNode(f"node {node} not in topology")


def build_topology(family: ScenarioFamily, pan_id: str = "PAN-1") -> Topology:
    """Build the standard nine-node topology for a scenario family.

    R3's baseline parent is R2 for families I/II and C for family III.
    """
    normal = {E1: R1, E2: R1, E3: R3, E4: R2, R1: C, R2: C}
    normal[R3] = C if family is ScenarioFamily.III else R2
    return Topology(
        nodes=frozenset(ROSTER),
        normal_dest=dict(normal),
        current_dest=dict(normal),
        pan_id=pan_id,
    )


@dataclass(frozen=True)
class RoutePath:
    hops: tuple[NodeId, ...]
    looped: bool = False

    @property
    def terminal(self) -> NodeId:
        return self.hops[-1]


def route_path(topology: Topology, src: NodeId) -> RoutePath:
    """Follow ``current_dest`` from ``src`` until C, A, or the hop limit.

    A revisited node or exhausted hop budget yields a truncated path with
    ``looped`` set; detection code must never hang on malicious loops.
    """
    topology.require(src)
    if src.role not in (Role.EDGE, Role.ROUTER):
        raise UnknownNode(f"{src} does not originate or forward traffic")
    path = [src]
    seen = {src}
    node = src
    for _ in range(HOP_LIMIT):
        nxt = topology.current_dest.get(node)
        if nxt is None:
            break
        path.append(nxt)
        if nxt in (C, A):
            return RoutePath(tuple(path))
        if nxt in seen:
            return RoutePath(tuple(path), looped=True)
        seen.add(nxt)
        node = nxt
    return RoutePath(tuple(path), looped=True)


def set_destination(topology: Topology, target: NodeId, new_dest: NodeId) -> Topology:
    """Return a topology with ``target``'s live destination rewritten."""
    topology.require(target)
    topology.require(new_dest)
    if target == C:
        raise InvalidRedirection("coordinator is never redirected")
    if new_dest == target:
        raise InvalidRedirection(f"{target} cannot route to itself")
    current = dict(topology.current_dest)
    current[target] = new_dest
    return replace(topology, current_dest=current)


def restore_normal(topology: Topology) -> Topology:
    """Return a topology with live routing reset to the baseline."""
    return replace(topology, current_dest=dict(topology.normal_dest))


def to_config(topology: Topology) -> str:
    """Serialize a topology to the text config format.

    One ``nodes`` line, one ``pan`` line, then one ``X>Y`` baseline pair
    per sender in roster order.
    """
    nodes = " ".join(str(n) for n in sorted(topology.nodes, key=NodeId.sort_key))
    lines = [f"nodes {nodes}", f"pan {topology.pan_id}"]
    for src in sorted(topology.normal_dest, key=NodeId.sort_key):
        lines.append(f"{src}>{topology.normal_dest[src]}")
    return "\n".join(lines) + "\n"


def from_config(text: str) -> Topology:
    """Parse the config format produced by :func:`to_config`."""
    nodes: frozenset[NodeId] | None = None
    pan_id = "PAN-1"
    normal: dict[NodeId, NodeId] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("nodes "):
            nodes = frozenset(NodeId.parse(tok) for tok in line.split()[1:])
        elif line.startswith("pan "):
            pan_id = line.split(None, 1)[1]
        elif ">" in line:
            src_tok, dst_tok = line.split(">", 1)
            normal[NodeId.parse(src_tok)] = NodeId.parse(dst_tok)
        else:
            raise ValueError(f"unrecognized topology config line {raw!r}")
    if nodes is None:
        raise ValueError("topology config missing nodes line")
    for src, dst in normal.items():
        if src not in nodes or dst not in nodes:
            raise UnknownNode(f"destination pair {src}>{dst} references unknown node")
    return Topology(nodes=nodes, normal_dest=dict(normal),
                    current_dest=dict(normal), pan_id=pan_id)
