"""Deterministic queue-based traffic microsimulation.

Point-queue dynamics on a 1 s tick: vehicles traverse links at free-flow
speed, then wait in a per-movement FIFO at the stop line. A movement
given green discharges one vehicle per saturation headway (2 s); a phase
switch first shows 3 s of yellow during which nothing at that
intersection discharges. Induction-loop detectors see 50 m back from
each stop line; queued vehicles occupy 7.5 m slots, so a detector counts
at most 6 stopped vehicles per lane.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .demand import EPISODE_SECONDS, DemandSchedule, Vehicle, sample_vehicles
from .metrics import MetricReport
from .network import Intersection, Network, split_lane_id

YELLOW_SECONDS = 3
GREEN_SECONDS = 10
SATURATION_HEADWAY_S = 2.0
DETECTOR_RANGE_M = 50.0
STOPPED_SLOT_M = 7.5
DETECTOR_CAP = int(DETECTOR_RANGE_M // STOPPED_SLOT_M)


class SimulationError(RuntimeError):
    pass


@dataclass
class SignalState:
    current_phase: int = 0
    yellow_until: float = 0.0
    next_decision: float = 0.0


@dataclass
class DetectorRead:
    """Per-lane detector counts around one intersection.

    q_in / n_in are keyed by incoming lane; q_out / n_out by outgoing
    lane, measured at that lane's own downstream stop line (zero at
    boundary exits).
    """

    q_in: dict[str, int] = field(default_factory=dict)
    n_in: dict[str, int] = field(default_factory=dict)
    q_out: dict[str, int] = field(default_factory=dict)
    n_out: dict[str, int] = field(default_factory=dict)

    def movement_counts(self, ix: Intersection, m_idx: int) -> tuple[int, int, int, int]:
        m = ix.movements[m_idx]
        return (self.q_in[m.in_lane], self.q_out[m.out_lane],
                self.n_in[m.in_lane], self.n_out[m.out_lane])


class Simulation:
    """Mutable state of one episode over a static Network."""

    def __init__(self, net: Network, vehicles: list[Vehicle],
                 horizon: int = EPISODE_SECONDS):
        self.net = net
        self.vehicles = vehicles
        self.horizon = horizon
        self.clock = 0
        self.signals = {ix.id: SignalState() for ix in net.intersections}
        self.queues: dict[str, list[list[Vehicle]]] = {
            ix.id: [[] for _ in ix.movements] for ix in net.intersections
        }
        self.lane_queued: dict[str, int] = {}
        for ix in net.intersections:
            for lane in ix.in_lanes:
                self.lane_queued.setdefault(lane, 0)
        self.driving: dict[str, list[Vehicle]] = {}  # lane id -> vehicles on it
        self.movement_free_at: dict[tuple[str, int], float] = {}
        self.departed = 0
        self.arrived = 0
        self.queued_total = 0
        self._driving_speed_sum = 0.0
        self._driving_count = 0
        self._events: list[tuple[float, int, Vehicle]] = []
        self._event_seq = 0
        self._pending = sorted(vehicles, key=lambda v: (v.depart_time, v.vid))
        self._pending_idx = 0
        self._queue_time_sum = 0.0
        self._speed_time_sum = 0.0
        self._speed_time_count = 0
        self._ticks_sampled = 0
        self._in_lane_owner = {
            lane: ix.id for ix in net.intersections for lane in ix.in_lanes
        }
        self._sync()

    # -- state transitions ---------------------------------------------------

    def _schedule(self, when: float, vehicle: Vehicle) -> None:
        heapq.heappush(self._events, (when, self._event_seq, vehicle))
        self._event_seq += 1

    def _choose_movement(self, link_id: str, next_link_id: str, iid: str) -> int:
        """Leftmost-available lane rule: take the lowest-indexed feasible
        in-lane whose standing queue is below the detector cap, else the
        shortest queue (lowest lane index on ties)."""
        ix = self.net.intersection_by_id[iid]
        feasible = []
        for m_idx, m in enumerate(ix.movements):
            if m.in_link == link_id and m.out_link == next_link_id:
                feasible.append((split_lane_id(m.in_lane)[1], m_idx, m.in_lane))
        feasible.sort()
        if not feasible:
            raise SimulationError(f"no movement from {link_id} to {next_link_id} at {iid}")
        for _, m_idx, lane in feasible:
            if self.lane_queued[lane] < DETECTOR_CAP:
                return m_idx
        return min(feasible, key=lambda f: (self.lane_queued[f[2]], f[0]))[1]

    def _enter_link(self, v: Vehicle, leg: int, at_time: float) -> None:
        v.leg = leg
        v.entered_leg_at = at_time
        v.state = "driving"
        link = self.net.link_by_id[v.route[leg]]
        if leg + 1 < len(v.route):
            iid = link.dst
            m_idx = self._choose_movement(link.id, v.route[leg + 1], iid)
            v.movement = (iid, m_idx)
            ix = self.net.intersection_by_id[iid]
            v.lane = split_lane_id(ix.movements[m_idx].in_lane)[1]
        else:
            v.movement = None
            v.lane = 0
        self.driving.setdefault(link.lane_id(v.lane), []).append(v)
        self._driving_speed_sum += link.speed_mps
        self._driving_count += 1
        self._schedule(at_time + link.travel_time, v)

    def _leave_link(self, v: Vehicle) -> None:
        link = self.net.link_by_id[v.route[v.leg]]
        self.driving[link.lane_id(v.lane)].remove(v)
        self._driving_speed_sum -= link.speed_mps
        self._driving_count -= 1

    def _sync(self) -> None:
        """Bring vehicle state up to the current instant: departures enter
        their first link; finished traversals join queues or arrive."""
        now = self.clock + 1e-9
        while self._pending_idx < len(self._pending):
            v = self._pending[self._pending_idx]
            if v.depart_time > now:
                break
            self._pending_idx += 1
            self.departed += 1
            self._enter_link(v, 0, v.depart_time)
        while self._events and self._events[0][0] <= now:
            when, _, v = heapq.heappop(self._events)
            self._leave_link(v)
            if v.leg + 1 == len(v.route):
                v.state = "arrived"
                v.arrive_time = when
                self.arrived += 1
            else:
                iid, m_idx = v.movement
                v.state = "queued"
                self.queues[iid][m_idx].append(v)
                ix = self.net.intersection_by_id[iid]
                self.lane_queued[ix.movements[m_idx].in_lane] += 1
                self.queued_total += 1

    def _discharge(self) -> None:
        """One second of saturation flow for every green movement."""
        t = float(self.clock)
        for ix in self.net.intersections:
            sig = self.signals[ix.id]
            if t < sig.yellow_until or not ix.phases:
                continue
            for m_idx in ix.phases[sig.current_phase]:
                queue = self.queues[ix.id][m_idx]
                if not queue:
                    continue
                if self.movement_free_at.get((ix.id, m_idx), -1.0) > t:
                    continue
                v = queue.pop(0)
                self.movement_free_at[(ix.id, m_idx)] = t + SATURATION_HEADWAY_S
                self.lane_queued[ix.movements[m_idx].in_lane] -= 1
                self.queued_total -= 1
                self._enter_link(v, v.leg + 1, t + 1.0)

    def step(self) -> None:
        """Advance the simulation by one second."""
        self._queue_time_sum += self.queued_total
        self._speed_time_sum += self._driving_speed_sum
        self._speed_time_count += self._driving_count
        self._ticks_sampled += 1
        self._discharge()
        self.clock += 1
        self._sync()

    # -- control interface ----------------------------------------------------

    def apply_action(self, iid: str, phase_idx: int) -> None:
        ix = self.net.intersection_by_id[iid]
        sig = self.signals[iid]
        if self.clock < sig.yellow_until:
            raise SimulationError(
                f"{iid}: action at t={self.clock} during yellow (until {sig.yellow_until})")
        if not 0 <= phase_idx < ix.n_phases:
            raise SimulationError(
                f"{iid}: phase {phase_idx} out of range 0..{ix.n_phases - 1}")
        if phase_idx != sig.current_phase:
            sig.current_phase = phase_idx
            sig.yellow_until = self.clock + YELLOW_SECONDS
            sig.next_decision = self.clock + YELLOW_SECONDS + GREEN_SECONDS
        else:
            sig.next_decision = self.clock + GREEN_SECONDS

    def due_intersections(self) -> list[str]:
        return [ix.id for ix in self.net.intersections
                if self.signals[ix.id].next_decision <= self.clock]

    # -- observation interface --------------------------------------------------

    def _lane_queue_capped(self, lane: str) -> int:
        return min(self.lane_queued.get(lane, 0), DETECTOR_CAP)

    def _lane_moving_near_end(self, lane: str) -> int:
        link = self.net.link_by_id[split_lane_id(lane)[0]]
        count = 0
        for v in self.driving.get(lane, ()):
            dist_left = link.length_m - link.speed_mps * (self.clock - v.entered_leg_at)
            if dist_left <= DETECTOR_RANGE_M + 1e-9:
                count += 1
        return count

    def detectors(self, iid: str) -> DetectorRead:
        ix = self.net.intersection_by_id[iid]
        read = DetectorRead()
        for lane in ix.in_lanes:
            read.q_in[lane] = self._lane_queue_capped(lane)
            read.n_in[lane] = self._lane_moving_near_end(lane)
        for lane in ix.out_lanes:
            if lane in self._in_lane_owner:  # feeds another signalized junction
                read.q_out[lane] = self._lane_queue_capped(lane)
                read.n_out[lane] = self._lane_moving_near_end(lane)
            else:
                read.q_out[lane] = 0
                read.n_out[lane] = 0
        return read

    def reward(self, iid: str) -> float:
        ix = self.net.intersection_by_id[iid]
        return -float(sum(self._lane_queue_capped(lane) for lane in ix.in_lanes))

    # -- bookkeeping ------------------------------------------------------------

    def in_network(self) -> int:
        return self.departed - self.arrived

    def check_conservation(self) -> bool:
        driving = sum(len(vs) for vs in self.driving.values())
        return self.departed == self.arrived + driving + self.queued_total

    def metrics(self) -> MetricReport:
        if self.clock < self.horizon:
            raise SimulationError(f"episode not finished: clock={self.clock}")
        n_int = max(len(self.net.intersections), 1)
        ticks = max(self._ticks_sampled, 1)
        arrived = [v for v in self.vehicles if v.state == "arrived"]
        entered = [v for v in self.vehicles if v.depart_time < self.horizon]
        trip_times = [v.arrive_time - v.depart_time for v in arrived]
        delays = [v.arrive_time - v.depart_time - v.free_flow_time for v in arrived]
        durations = [
            (v.arrive_time if v.state == "arrived" else float(self.horizon)) - v.depart_time
            for v in entered
        ]

        def _mean(xs):
            return sum(xs) / len(xs) if xs else 0.0

        return MetricReport(
            queue_veh=self._queue_time_sum / ticks / n_int,
            speed_mps=(self._speed_time_sum / self._speed_time_count
                       if self._speed_time_count else 0.0),
            completion_vps=len(arrived) / float(self.horizon),
            trip_time_s=_mean(trip_times),
            trip_delay_s=_mean(delays),
            trip_duration_s=_mean(durations),
        )


def build_simulation(net: Network, schedule: DemandSchedule,
                     seed: int | None = None) -> Simulation:
    """Sample an episode's vehicles (optionally reseeding) and wrap them."""
    if seed is not None:
        schedule = DemandSchedule(entries=schedule.entries, seed=seed)
    return Simulation(net, sample_vehicles(net, schedule))


def run_episode(sim: Simulation, act) -> MetricReport:
    """Drive a simulation to the horizon with act(sim, intersection_id) -> phase."""
    while sim.clock < sim.horizon:
        for iid in sim.due_intersections():
            sim.apply_action(iid, act(sim, iid))
        sim.step()
    return sim.metrics()
