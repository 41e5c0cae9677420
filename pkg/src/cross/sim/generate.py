"""Scenario generators: regular grids, arterial corridors, and mixed
corridors containing T-junctions.

Every generated road is two-way with two lanes at 15 m/s and 300 m
between nodes. Road-pair movements map lane i to lane i, so a T-junction
has 12 movements over 6 incoming lanes and 3 phases, and a 4-way has 24
movements over 8 incoming lanes and 8 phases. Demand entries use
destination "*" (uniform over reachable boundary exits).
"""

from __future__ import annotations

import math

from .demand import DemandEntry, DemandSchedule, Vehicle, sample_vehicles
from .network import (
    Intersection,
    Link,
    Network,
    ScenarioError,
    build_phase_plan,
    network_from_scenario,
)

LINK_LENGTH_M = 300.0
LINK_SPEED_MPS = 15.0
LINK_LANES = 2


def _angle(src_xy, dst_xy) -> float:
    return math.degrees(math.atan2(dst_xy[1] - src_xy[1], dst_xy[0] - src_xy[0])) % 360.0


def _build_doc(nodes: dict[str, tuple[float, float, str]],
               edges: list[tuple[str, str]],
               demand_entries: list[DemandEntry],
               seed: int) -> dict:
    """Assemble a scenario document from node positions and two-way edges."""
    node_docs = [
        {"id": nid, "x": x, "y": y, "type": kind} for nid, (x, y, kind) in nodes.items()
    ]
    link_docs = []
    for a, b in edges:
        for src, dst in ((a, b), (b, a)):
            link_docs.append({
                "from": src, "to": dst, "length_m": LINK_LENGTH_M,
                "speed_mps": LINK_SPEED_MPS, "lanes": LINK_LANES,
            })
    neighbors: dict[str, list[str]] = {}
    for a, b in edges:
        neighbors.setdefault(a, []).append(b)
        neighbors.setdefault(b, []).append(a)

    intersection_docs = []
    for nid, (x, y, kind) in nodes.items():
        if kind != "intersection":
            continue
        arms = sorted(neighbors[nid], key=lambda n: (_angle((x, y), nodes[n][:2]), n))
        movements = []
        for entry in arms:
            for exit_ in arms:
                if exit_ == entry:
                    continue
                for lane in range(LINK_LANES):
                    movements.append({
                        "in_lane": f"{entry}->{nid}#{lane}",
                        "out_lane": f"{nid}->{exit_}#{lane}",
                    })
        intersection_docs.append({"id": nid, "movements": movements, "phases": []})

    doc = {
        "nodes": node_docs,
        "links": link_docs,
        "intersections": intersection_docs,
        "demand": {
            "entries": [
                {"origin": e.origin, "destination": e.destination,
                 "rate_vpm": e.rate_vpm, "t0": e.t0, "t1": e.t1}
                for e in demand_entries
            ],
            "seed": seed,
        },
    }
    _fill_phases(doc)
    return doc


def _fill_phases(doc: dict) -> None:
    """Compute archetype phase plans from the document's geometry."""
    from .network import Movement, Node, _resolve_geometry

    nodes = {n["id"]: Node(n["id"], n["x"], n["y"], n["type"]) for n in doc["nodes"]}
    links = [Link(l["from"], l["to"], l["length_m"], l["speed_mps"], l["lanes"])
             for l in doc["links"]]
    link_by_id = {l.id: l for l in links}
    for idoc in doc["intersections"]:
        ix = Intersection(
            id=idoc["id"],
            movements=[Movement(m["in_lane"], m["out_lane"]) for m in idoc["movements"]],
            phases=[],
        )
        _resolve_geometry(ix, nodes, links)
        idoc["phases"] = build_phase_plan(ix, link_by_id)


def schedule_from_doc(doc: dict) -> DemandSchedule:
    demand = doc.get("demand", {"entries": [], "seed": 0})
    entries = [
        DemandEntry(e["origin"], e["destination"], float(e["rate_vpm"]),
                    float(e.get("t0", 0.0)), float(e.get("t1", 3600.0)))
        for e in demand["entries"]
    ]
    return DemandSchedule(entries=entries, seed=int(demand.get("seed", 0)))


def _uniform_entries(origins: list[str], total_rate_vpm: float) -> list[DemandEntry]:
    if not origins:
        return []
    rate = total_rate_vpm / len(origins)
    return [DemandEntry(o, "*", rate) for o in sorted(origins)]


def grid_scenario(rows: int, cols: int, total_rate_vpm: float, seed: int = 0) -> dict:
    """rows x cols lattice of 4-way intersections with boundary stubs."""
    if rows < 1 or cols < 1:
        raise ScenarioError(f"grid needs rows, cols >= 1, got {rows}x{cols}")
    s = LINK_LENGTH_M
    nodes: dict[str, tuple[float, float, str]] = {}
    for r in range(rows):
        for c in range(cols):
            nodes[f"i{r}_{c}"] = (c * s, r * s, "intersection")
    for r in range(rows):
        nodes[f"bw{r}"] = (-s, r * s, "boundary")
        nodes[f"be{r}"] = (cols * s, r * s, "boundary")
    for c in range(cols):
        nodes[f"bs{c}"] = (c * s, -s, "boundary")
        nodes[f"bn{c}"] = (c * s, rows * s, "boundary")
    edges = []
    for r in range(rows):
        edges.append((f"bw{r}", f"i{r}_0"))
        for c in range(cols - 1):
            edges.append((f"i{r}_{c}", f"i{r}_{c + 1}"))
        edges.append((f"i{r}_{cols - 1}", f"be{r}"))
    for c in range(cols):
        edges.append((f"bs{c}", f"i0_{c}"))
        for r in range(rows - 1):
            edges.append((f"i{r}_{c}", f"i{r + 1}_{c}"))
        edges.append((f"i{rows - 1}_{c}", f"bn{c}"))
    origins = [nid for nid, (_, _, kind) in nodes.items() if kind == "boundary"]
    return _build_doc(nodes, edges, _uniform_entries(origins, total_rate_vpm), seed)


def arterial_scenario(length: int, total_rate_vpm: float, seed: int = 0,
                      corridor_share: float = 0.7) -> dict:
    """1 x length corridor of 4-way intersections; most demand enters at the
    corridor ends."""
    doc = grid_scenario(1, length, 0.0, seed)
    ends = ["bw0", "be0"]
    sides = sorted(f"b{d}{c}" for d in "sn" for c in range(length))
    entries = [DemandEntry(o, "*", corridor_share * total_rate_vpm / len(ends)) for o in ends]
    entries += [DemandEntry(o, "*", (1 - corridor_share) * total_rate_vpm / len(sides))
                for o in sides]
    doc["demand"]["entries"] = [
        {"origin": e.origin, "destination": e.destination, "rate_vpm": e.rate_vpm,
         "t0": e.t0, "t1": e.t1} for e in entries
    ]
    return doc


def mixed_corridor_scenario(length: int, total_rate_vpm: float, seed: int = 0) -> dict:
    """1 x length corridor where odd columns lack the north arm, so the
    network mixes 4-way intersections with T-junctions."""
    if length < 2:
        raise ScenarioError(f"mixed corridor needs length >= 2, got {length}")
    s = LINK_LENGTH_M
    nodes: dict[str, tuple[float, float, str]] = {}
    for c in range(length):
        nodes[f"i0_{c}"] = (c * s, 0.0, "intersection")
    nodes["bw0"] = (-s, 0.0, "boundary")
    nodes["be0"] = (length * s, 0.0, "boundary")
    for c in range(length):
        nodes[f"bs{c}"] = (c * s, -s, "boundary")
        if c % 2 == 0:
            nodes[f"bn{c}"] = (c * s, s, "boundary")
    edges = [("bw0", "i0_0"), (f"i0_{length - 1}", "be0")]
    for c in range(length - 1):
        edges.append((f"i0_{c}", f"i0_{c + 1}"))
    for c in range(length):
        edges.append((f"bs{c}", f"i0_{c}"))
        if c % 2 == 0:
            edges.append((f"bn{c}", f"i0_{c}"))
    origins = [nid for nid, (_, _, kind) in nodes.items() if kind == "boundary"]
    return _build_doc(nodes, edges, _uniform_entries(origins, total_rate_vpm), seed)


def t_junction_scenario(total_rate_vpm: float = 0.0, seed: int = 0) -> dict:
    """A single T-junction: three 2-lane roads, 12 movements, 3 phases."""
    s = LINK_LENGTH_M
    nodes = {
        "t0": (0.0, 0.0, "intersection"),
        "bw": (-s, 0.0, "boundary"),
        "be": (s, 0.0, "boundary"),
        "bs": (0.0, -s, "boundary"),
    }
    edges = [("bw", "t0"), ("t0", "be"), ("bs", "t0")]
    origins = ["bw", "be", "bs"]
    return _build_doc(nodes, edges, _uniform_entries(origins, total_rate_vpm), seed)


def generate_grid(rows: int, cols: int, total_rate_vpm: float,
                  seed: int = 0) -> tuple[Network, list[Vehicle]]:
    """Build a grid network and its sampled episode vehicles."""
    doc = grid_scenario(rows, cols, total_rate_vpm, seed)
    net = network_from_scenario(doc)
    return net, sample_vehicles(net, schedule_from_doc(doc))
