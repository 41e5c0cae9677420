"""Traffic demand: Poisson arrival sampling and shortest-path routing.

Each schedule entry is an independent time-homogeneous Poisson stream on
its interval, seeded per entry so vehicle lists are reproducible
regardless of evaluation order. Routes are shortest free-flow-time paths
over the movement-respecting link graph; a destination of "*" samples
uniformly among the boundary nodes reachable from the origin.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .network import Network, ScenarioError, split_lane_id

EPISODE_SECONDS = 3600


@dataclass
class DemandEntry:
    origin: str
    destination: str  # node id or "*"
    rate_vpm: float
    t0: float = 0.0
    t1: float = EPISODE_SECONDS


@dataclass
class DemandSchedule:
    entries: list[DemandEntry]
    seed: int = 0

    def validate(self, net: Network) -> None:
        origins = set(net.origins())
        dests = set(net.destinations())
        for k, e in enumerate(self.entries):
            if e.rate_vpm < 0:
                raise ScenarioError(f"demand entry {k}: negative rate {e.rate_vpm}")
            if not (0 <= e.t0 <= e.t1 <= EPISODE_SECONDS):
                raise ScenarioError(f"demand entry {k}: interval [{e.t0}, {e.t1}) out of range")
            if e.origin not in origins:
                raise ScenarioError(f"demand entry {k}: origin {e.origin!r} is not a boundary origin")
            if e.destination != "*" and e.destination not in dests:
                raise ScenarioError(f"demand entry {k}: destination {e.destination!r} unknown")


@dataclass
class Vehicle:
    vid: int
    route: list[str]  # link ids, origin to destination
    depart_time: float
    free_flow_time: float
    # runtime state, owned by the Simulation
    leg: int = -1
    lane: int = 0
    entered_leg_at: float = 0.0
    movement: tuple[str, int] | None = None  # (intersection id, movement index)
    arrive_time: float | None = None
    state: str = "pending"  # pending | driving | queued | arrived

    def __repr__(self) -> str:
        return f"Vehicle({self.vid}, state={self.state}, leg={self.leg})"


class Router:
    """Shortest free-flow-time paths over links, honoring turn movements."""

    def __init__(self, net: Network):
        self.net = net
        self.link_ids = [l.id for l in net.links]
        self.index = {lid: i for i, lid in enumerate(self.link_ids)}
        # successor links via the movement tables
        self.succ: list[list[int]] = [[] for _ in net.links]
        for ix in net.intersections:
            pairs = set()
            for m in ix.movements:
                pairs.add((m.in_link, m.out_link))
            for a, b in sorted(pairs):
                self.succ[self.index[a]].append(self.index[b])
        for lst in self.succ:
            lst.sort()
        self._cache: dict[str, tuple[list[float], list[int]]] = {}

    def _from_origin(self, origin: str):
        """Dijkstra over links from every entry link of a boundary origin."""
        if origin in self._cache:
            return self._cache[origin]
        n = len(self.net.links)
        dist = [math.inf] * n
        prev = [-1] * n
        heap = []
        for i, link in enumerate(self.net.links):
            if link.src == origin:
                dist[i] = link.travel_time
                heapq.heappush(heap, (dist[i], i))
        while heap:
            d, i = heapq.heappop(heap)
            if d > dist[i] + 1e-12:
                continue
            for j in self.succ[i]:
                nd = d + self.net.links[j].travel_time
                if nd < dist[j] - 1e-12:
                    dist[j] = nd
                    prev[j] = i
                    heapq.heappush(heap, (nd, j))
        self._cache[origin] = (dist, prev)
        return dist, prev

    def reachable_destinations(self, origin: str) -> list[str]:
        dist, _ = self._from_origin(origin)
        out = set()
        for i, link in enumerate(self.net.links):
            node = self.net.nodes[link.dst]
            if node.kind == "boundary" and link.dst != origin and dist[i] < math.inf:
                out.add(link.dst)
        return sorted(out)

    def route(self, origin: str, destination: str) -> list[str] | None:
        dist, prev = self._from_origin(origin)
        best, best_i = math.inf, -1
        for i, link in enumerate(self.net.links):
            if link.dst == destination and dist[i] < best - 1e-12:
                best, best_i = dist[i], i
        if best_i < 0:
            return None
        path = []
        i = best_i
        while i >= 0:
            path.append(self.link_ids[i])
            i = prev[i]
        return path[::-1]


def sample_vehicles(net: Network, schedule: DemandSchedule) -> list[Vehicle]:
    """Draw the full episode's vehicles from a demand schedule.

    Departure times floor to whole seconds (the simulator ticks at 1 s).
    """
    schedule.validate(net)
    router = Router(net)
    raw: list[tuple[float, int, int, list[str], float]] = []
    for k, entry in enumerate(sorted(schedule.entries, key=lambda e: (e.origin, e.destination, e.t0))):
        if entry.rate_vpm <= 0:
            continue
        rng = np.random.default_rng(np.random.SeedSequence([int(schedule.seed), k]))
        dests = (router.reachable_destinations(entry.origin)
                 if entry.destination == "*" else [entry.destination])
        if not dests:
            raise ScenarioError(f"origin {entry.origin}: no reachable destination")
        rate_per_s = entry.rate_vpm / 60.0
        t = entry.t0
        seq = 0
        while True:
            t += rng.exponential(1.0 / rate_per_s)
            if t >= entry.t1:
                break
            dest = dests[int(rng.integers(len(dests)))]
            route = router.route(entry.origin, dest)
            if route is None:
                raise ScenarioError(f"no route from {entry.origin} to {dest}")
            fft = sum(net.link_by_id[lid].travel_time for lid in route)
            raw.append((math.floor(t), k, seq, route, fft))
            seq += 1
    raw.sort(key=lambda r: (r[0], r[1], r[2]))
    return [
        Vehicle(vid=i, route=route, depart_time=float(dep), free_flow_time=fft)
        for i, (dep, _, _, route, fft) in enumerate(raw)
    ]
