"""Observation vectors for one intersection: per-movement traffic state,
the phase-activation table, and the static topology descriptor, all
padded to fixed caps (36 movements, 8 phases) with masks.

Detector counts are clipped at the detector saturation cap before they
reach the networks. Batches premultiply every padded slot by its mask,
so garbage written into padding can never influence a forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sim.engine import DETECTOR_CAP, Simulation
from .sim.network import MAX_MOVEMENTS, MAX_PHASES, Intersection, Network

FEATURES_PER_MOVEMENT = 5  # [active, q_in, q_out, n_in, n_out]
TOPOLOGY_DIM = 11
STATE_DIM = MAX_MOVEMENTS * FEATURES_PER_MOVEMENT

# intersection archetype one-hot: (kind, phase count) buckets
_ARCHETYPES = {("T-junction", 3): 0, ("4-way", 8): 2}
_OTHER = {"T-junction": 1, "4-way": 3}


@dataclass
class Observation:
    traffic: np.ndarray        # (36, 5)
    movement_mask: np.ndarray  # (36,) float 0/1
    phase_table: np.ndarray    # (8, 36)
    phase_mask: np.ndarray     # (8,) float 0/1
    topology: np.ndarray       # (11,)
    current_phase: int


def topology_vector(ix: Intersection, net: Network) -> np.ndarray:
    """Static intersection descriptor: archetype one-hot plus incoming and
    outgoing road aggregates (lengths in units of 100 m)."""
    one_hot = np.zeros(4)
    one_hot[_ARCHETYPES.get((ix.kind, ix.n_phases), _OTHER.get(ix.kind, 3))] = 1.0
    in_links = sorted({net.link_by_id[m.in_link] for m in ix.movements}, key=lambda l: l.id)
    out_links = sorted({net.link_by_id[m.out_link] for m in ix.movements}, key=lambda l: l.id)

    def _agg(links):
        if not links:
            return 0.0, 0.0, 0.0
        return (
            float(np.mean([l.length_m for l in links])) / 100.0,
            float(np.mean([l.speed_mps for l in links])),
            float(sum(l.lanes for l in links)),
        )

    l_in, v_in, n_l_in = _agg(in_links)
    l_out, v_out, n_l_out = _agg(out_links)
    return np.concatenate([one_hot, [l_in, v_in, n_l_in, float(ix.n_movements),
                                     l_out, v_out, n_l_out]])


def phase_table(ix: Intersection) -> np.ndarray:
    table = np.zeros((MAX_PHASES, MAX_MOVEMENTS))
    for p, movements in enumerate(ix.phases):
        for m in movements:
            table[p, m] = 1.0
    return table


def build_observation(sim: Simulation, iid: str,
                      topology: np.ndarray | None = None) -> Observation:
    """Assemble the padded observation triplet at the current instant."""
    ix = sim.net.intersection_by_id[iid]
    detectors = sim.detectors(iid)
    sig = sim.signals[iid]
    traffic = np.zeros((MAX_MOVEMENTS, FEATURES_PER_MOVEMENT))
    active = set(ix.phases[sig.current_phase]) if ix.phases else set()
    for m_idx in range(ix.n_movements):
        q_in, q_out, n_in, n_out = detectors.movement_counts(ix, m_idx)
        traffic[m_idx] = [
            1.0 if m_idx in active else 0.0,
            min(q_in, DETECTOR_CAP), min(q_out, DETECTOR_CAP),
            min(n_in, DETECTOR_CAP), min(n_out, DETECTOR_CAP),
        ]
    movement_mask = np.zeros(MAX_MOVEMENTS)
    movement_mask[:ix.n_movements] = 1.0
    phase_mask = np.zeros(MAX_PHASES)
    phase_mask[:ix.n_phases] = 1.0
    return Observation(
        traffic=traffic,
        movement_mask=movement_mask,
        phase_table=phase_table(ix),
        phase_mask=phase_mask,
        topology=topology if topology is not None else topology_vector(ix, sim.net),
        current_phase=sig.current_phase,
    )


class ObsBatch:
    """Stacked observations with padding premultiplied by masks.

    All arrays are plain numpy constants; networks wrap them in graph
    tensors on demand.
    """

    def __init__(self, observations: list[Observation]):
        if not observations:
            raise ValueError("ObsBatch: empty observation list")
        self.size = len(observations)
        traffic = np.stack([o.traffic for o in observations])          # (B, 36, 5)
        self.movement_mask = np.stack([o.movement_mask for o in observations])
        self.phase_mask = np.stack([o.phase_mask for o in observations])
        if (self.movement_mask.sum(axis=1) == 0).any() or (self.phase_mask.sum(axis=1) == 0).any():
            raise ValueError("ObsBatch: observation with no valid movements or phases")
        traffic = traffic * self.movement_mask[:, :, None]
        self.traffic_flat = traffic.reshape(self.size, STATE_DIM)
        table = np.stack([o.phase_table for o in observations])        # (B, 8, 36)
        table = table * self.phase_mask[:, :, None] * self.movement_mask[:, None, :]
        self.phase_rows = table.reshape(self.size * MAX_PHASES, MAX_MOVEMENTS)
        self.topology = np.stack([o.topology for o in observations])
        self.current_phase = np.array([o.current_phase for o in observations], dtype=np.intp)
        self.active_phase_row = table[np.arange(self.size), self.current_phase]
        self.entry_mask = np.repeat(self.movement_mask, FEATURES_PER_MOVEMENT, axis=1)

    @property
    def pattern_input(self) -> np.ndarray:
        """Concatenated [traffic state, active phase row, topology]."""
        return np.concatenate([self.traffic_flat, self.active_phase_row, self.topology], axis=1)


PATTERN_INPUT_DIM = STATE_DIM + MAX_MOVEMENTS + TOPOLOGY_DIM
