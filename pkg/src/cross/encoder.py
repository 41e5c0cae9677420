"""Phase-aware feature extraction backbone.

Per decision step the traffic state flattens through a linear+ReLU
encoder into a recurrent (GRU) summary of the intersection's recent
dynamics; each phase's activation row maps through a small MLP to a
phase embedding; multi-head cross-attention then lets every phase query
the recurrent state, and a residual keeps the output phase-specific.
Rows of padded phases are forced to zero on the way out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import GRUCell, Linear, Module, MultiHeadAttention
from .obs import MAX_MOVEMENTS, MAX_PHASES, STATE_DIM, ObsBatch


@dataclass
class EncoderConfig:
    d_model: int = 128
    n_heads: int = 4


class TrafficEncoder(Module):
    def __init__(self, rng: np.random.Generator, cfg: EncoderConfig):
        self.cfg = cfg
        d = cfg.d_model
        self.state_encoder = Linear(rng, STATE_DIM, d)
        self.recurrent = GRUCell(rng, d, d)
        self.phase_in = Linear(rng, MAX_MOVEMENTS, d)
        self.phase_out = Linear(rng, d, d)
        self.attention = MultiHeadAttention(rng, d, cfg.n_heads)

    def initial_hidden(self, batch_size: int = 1) -> np.ndarray:
        return np.zeros((batch_size, self.cfg.d_model))

    def __call__(self, batch: ObsBatch, hidden: np.ndarray) -> tuple[Tensor, Tensor]:
        """Returns (phase_repr, new_hidden).

        phase_repr is (B * MAX_PHASES, d) with padded-phase rows exactly
        zero; new_hidden is (B, d).
        """
        if hidden.shape != (batch.size, self.cfg.d_model):
            raise ValueError(f"hidden shape {hidden.shape} != ({batch.size}, {self.cfg.d_model})")
        x = ad.relu(self.state_encoder(Tensor(batch.traffic_flat)))
        new_hidden = self.recurrent(x, Tensor(hidden))
        phase_emb = self.phase_out(ad.relu(self.phase_in(Tensor(batch.phase_rows))))
        attended = self.attention.batched_one_key(phase_emb, new_hidden, MAX_PHASES)
        fused = ad.add(phase_emb, attended)
        row_mask = np.repeat(batch.phase_mask.reshape(-1, 1), self.cfg.d_model, axis=1)
        return ad.mul(fused, Tensor(row_mask)), new_hidden


def masked_phase_pool(phase_repr: Tensor, phase_mask: np.ndarray, d_model: int) -> Tensor:
    """Mean over each sample's unmasked phase rows: (B*P, d) -> (B, d)."""
    counts = phase_mask.sum(axis=1)
    row_mask = np.repeat(phase_mask.reshape(-1, 1), d_model, axis=1)
    summed = ad.segment_sum(ad.mul(phase_repr, Tensor(row_mask)), MAX_PHASES)
    inv = np.repeat((1.0 / counts).reshape(-1, 1), d_model, axis=1)
    return ad.mul(summed, Tensor(inv))
