"""Static road network model: nodes, links, lane-to-lane movements,
signal phases, and the geometric conflict table.

Two movements conflict when their paths cross inside the junction box or
when they merge into the same outgoing lane. Crossing is decided on arm
angles: traffic entering from an arm is offset slightly counterclockwise
of the arm axis and exiting traffic clockwise (right-hand driving), and
two movement chords conflict iff their endpoints interleave around the
junction circle. Movements sharing an entry arm diverge and never
conflict.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

MAX_MOVEMENTS = 36
MAX_PHASES = 8

# Angular offset between a road axis and its entry/exit chord endpoints.
ARM_OFFSET_DEG = 10.0


class ScenarioError(ValueError):
    """Invalid scenario document or network structure."""


@dataclass(frozen=True)
class Node:
    id: str
    x: float
    y: float
    kind: str  # "intersection" or "boundary"


@dataclass(frozen=True)
class Link:
    src: str
    dst: str
    length_m: float
    speed_mps: float
    lanes: int

    @property
    def id(self) -> str:
        return f"{self.src}->{self.dst}"

    def lane_id(self, i: int) -> str:
        return f"{self.src}->{self.dst}#{i}"

    @property
    def travel_time(self) -> float:
        return self.length_m / self.speed_mps


def split_lane_id(lane: str) -> tuple[str, int]:
    link_part, _, idx = lane.rpartition("#")
    return link_part, int(idx)


@dataclass(frozen=True)
class Movement:
    in_lane: str
    out_lane: str

    @property
    def in_link(self) -> str:
        return split_lane_id(self.in_lane)[0]

    @property
    def out_link(self) -> str:
        return split_lane_id(self.out_lane)[0]


@dataclass
class Intersection:
    id: str
    movements: list[Movement]
    phases: list[list[int]]
    in_lanes: list[str] = field(default_factory=list)
    out_lanes: list[str] = field(default_factory=list)
    kind: str = "4-way"
    arm_angles: dict[str, float] = field(default_factory=dict)  # neighbor node -> degrees

    @property
    def n_movements(self) -> int:
        return len(self.movements)

    @property
    def n_phases(self) -> int:
        return len(self.phases)


@dataclass
class Network:
    nodes: dict[str, Node]
    links: list[Link]
    intersections: list[Intersection]

    def __post_init__(self):
        self.link_by_id = {l.id: l for l in self.links}
        self.intersection_by_id = {i.id: i for i in self.intersections}

    @property
    def boundary_nodes(self) -> list[str]:
        return [n.id for n in self.nodes.values() if n.kind == "boundary"]

    def origins(self) -> list[str]:
        """Boundary nodes with at least one outgoing link."""
        outs = {l.src for l in self.links}
        return [b for b in self.boundary_nodes if b in outs]

    def destinations(self) -> list[str]:
        ins = {l.dst for l in self.links}
        return [b for b in self.boundary_nodes if b in ins]


# ---------------------------------------------------------------------------
# conflict geometry


def _entry_angle(arm_deg: float) -> float:
    return (arm_deg + ARM_OFFSET_DEG) % 360.0


def _exit_angle(arm_deg: float) -> float:
    return (arm_deg - ARM_OFFSET_DEG) % 360.0


def _inside_ccw_arc(start: float, end: float, x: float) -> bool:
    span = (end - start) % 360.0
    pos = (x - start) % 360.0
    return 1e-9 < pos < span - 1e-9


def _chords_cross(c1: tuple[float, float], c2: tuple[float, float]) -> bool:
    inside = int(_inside_ccw_arc(c1[0], c1[1], c2[0])) + int(_inside_ccw_arc(c1[0], c1[1], c2[1]))
    return inside == 1


def movement_chord(ix: Intersection, m: Movement, link_by_id: dict[str, Link]) -> tuple[float, float]:
    in_arm = link_by_id[m.in_link].src
    out_arm = link_by_id[m.out_link].dst
    return (_entry_angle(ix.arm_angles[in_arm]), _exit_angle(ix.arm_angles[out_arm]))


def movements_conflict(ix: Intersection, i: int, j: int, link_by_id: dict[str, Link]) -> bool:
    a, b = ix.movements[i], ix.movements[j]
    in_a, in_b = link_by_id[a.in_link], link_by_id[b.in_link]
    if in_a.src == in_b.src:
        return False  # diverging from the same arm
    if a.out_lane == b.out_lane:
        return True  # merging into one lane
    return _chords_cross(movement_chord(ix, a, link_by_id), movement_chord(ix, b, link_by_id))


def turn_kind(ix: Intersection, m: Movement, link_by_id: dict[str, Link]) -> str:
    """Classify a movement as left / through / right from arm geometry."""
    in_arm = link_by_id[m.in_link].src
    out_arm = link_by_id[m.out_link].dst
    heading = (ix.arm_angles[in_arm] + 180.0) % 360.0
    diff = (ix.arm_angles[out_arm] - heading + 180.0) % 360.0 - 180.0
    if diff > 30.0:
        return "left"
    if diff < -30.0:
        return "right"
    return "through"


# ---------------------------------------------------------------------------
# scenario documents


def network_from_scenario(doc: dict) -> Network:
    """Build and validate a Network from a scenario document."""
    try:
        nodes = {
            n["id"]: Node(n["id"], float(n["x"]), float(n["y"]), n["type"])
            for n in doc["nodes"]
        }
    except KeyError as e:
        raise ScenarioError(f"node entry missing field {e}") from e
    links = []
    for entry in doc.get("links", []):
        link = Link(entry["from"], entry["to"], float(entry["length_m"]),
                    float(entry["speed_mps"]), int(entry["lanes"]))
        if link.src not in nodes or link.dst not in nodes:
            raise ScenarioError(f"link {link.id} references unknown node")
        if link.length_m <= 0 or link.speed_mps <= 0 or link.lanes < 1:
            raise ScenarioError(f"link {link.id} has non-positive length, speed, or lanes")
        links.append(link)
    link_by_id = {l.id: l for l in links}

    intersections = []
    for idoc in doc.get("intersections", []):
        iid = idoc["id"]
        if iid not in nodes:
            raise ScenarioError(f"intersection {iid}: unknown node")
        movements = [Movement(m["in_lane"], m["out_lane"]) for m in idoc["movements"]]
        phases = [list(map(int, p)) for p in idoc["phases"]]
        ix = Intersection(id=iid, movements=movements, phases=phases)
        _resolve_geometry(ix, nodes, links)
        intersections.append(ix)

    net = Network(nodes=nodes, links=links, intersections=intersections)
    validate_network(net)
    return net


def _resolve_geometry(ix: Intersection, nodes: dict[str, Node], links: list[Link]) -> None:
    center = nodes[ix.id]
    incoming = [l for l in links if l.dst == ix.id]
    outgoing = [l for l in links if l.src == ix.id]
    ix.in_lanes = [l.lane_id(i) for l in incoming for i in range(l.lanes)]
    ix.out_lanes = [l.lane_id(i) for l in outgoing for i in range(l.lanes)]
    arms = sorted({l.src for l in incoming} | {l.dst for l in outgoing})
    ix.arm_angles = {
        arm: math.degrees(math.atan2(nodes[arm].y - center.y, nodes[arm].x - center.x)) % 360.0
        for arm in arms
    }
    ix.kind = "T-junction" if len(arms) == 3 else "4-way"


def validate_network(net: Network) -> None:
    for ix in net.intersections:
        loc = f"intersection {ix.id}"
        if ix.n_movements > MAX_MOVEMENTS:
            raise ScenarioError(f"{loc}: {ix.n_movements} movements exceeds cap {MAX_MOVEMENTS}")
        if ix.n_phases > MAX_PHASES:
            raise ScenarioError(f"{loc}: {ix.n_phases} phases exceeds cap {MAX_PHASES}")
        in_set, out_set = set(ix.in_lanes), set(ix.out_lanes)
        for k, m in enumerate(ix.movements):
            if m.in_lane not in in_set:
                raise ScenarioError(f"{loc}: movement {k} references unknown incoming lane {m.in_lane!r}")
            if m.out_lane not in out_set:
                raise ScenarioError(f"{loc}: movement {k} references unknown outgoing lane {m.out_lane!r}")
        covered = set()
        for p_idx, phase in enumerate(ix.phases):
            for m_idx in phase:
                if not 0 <= m_idx < ix.n_movements:
                    raise ScenarioError(f"{loc} phase {p_idx}: unknown movement index {m_idx}")
            for a_pos in range(len(phase)):
                for b_pos in range(a_pos + 1, len(phase)):
                    a, b = phase[a_pos], phase[b_pos]
                    if movements_conflict(ix, a, b, net.link_by_id):
                        raise ScenarioError(
                            f"{loc} phase {p_idx}: movements {a} and {b} conflict")
            covered.update(phase)
        if ix.movements and covered != set(range(ix.n_movements)):
            missing = sorted(set(range(ix.n_movements)) - covered)
            raise ScenarioError(f"{loc}: movements {missing} appear in no phase")


def load_scenario(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ScenarioError(f"{path}: not valid JSON ({e})") from e
    return doc


def load_network(path) -> Network:
    """Load and validate a scenario file, returning its Network."""
    return network_from_scenario(load_scenario(path))


def save_scenario(doc: dict, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# archetype phase plans (used by scenario generators)


def build_phase_plan(ix: Intersection, link_by_id: dict[str, Link]) -> list[list[int]]:
    """Standard signal plan for the two junction archetypes.

    4-way: dual through (+ same-arm rights), dual left, and one
    single-arm phase per approach, eight phases total. T-junction: both
    throughs plus the right turn into the stem, all-from-stem, and
    all-from-the-left-turning-arm, three phases total.
    """
    arms = sorted(ix.arm_angles)
    by_entry: dict[str, list[int]] = {arm: [] for arm in arms}
    kind_of: dict[int, str] = {}
    for k, m in enumerate(ix.movements):
        entry = link_by_id[m.in_link].src
        by_entry[entry].append(k)
        kind_of[k] = turn_kind(ix, m, link_by_id)

    def of_kind(arm: str, kind: str) -> list[int]:
        return [k for k in by_entry[arm] if kind_of[k] == kind]

    if len(arms) == 4:
        ordered = sorted(arms, key=lambda a: ix.arm_angles[a])
        a0, a1, a2, a3 = ordered  # opposite pairs: (a0, a2) and (a1, a3)
        phases = [
            of_kind(a0, "through") + of_kind(a2, "through") + of_kind(a0, "right") + of_kind(a2, "right"),
            of_kind(a0, "left") + of_kind(a2, "left"),
            of_kind(a1, "through") + of_kind(a3, "through") + of_kind(a1, "right") + of_kind(a3, "right"),
            of_kind(a1, "left") + of_kind(a3, "left"),
            by_entry[a0], by_entry[a2], by_entry[a1], by_entry[a3],
        ]
    elif len(arms) == 3:
        through_arms = [a for a in arms if any(kind_of[k] == "through" for k in by_entry[a])]
        stem = next(a for a in arms if a not in through_arms)
        right_arm = next(a for a in through_arms if of_kind(a, "right"))
        left_arm = next(a for a in through_arms if a != right_arm)
        phases = [
            of_kind(right_arm, "through") + of_kind(left_arm, "through") + of_kind(right_arm, "right"),
            by_entry[stem],
            by_entry[left_arm],
        ]
    else:
        raise ScenarioError(f"intersection {ix.id}: no phase plan for {len(arms)} arms")
    return [sorted(p) for p in phases if p]
