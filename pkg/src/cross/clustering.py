"""Predictive pattern clustering.

A two-layer GLU MLP maps [traffic state, active phase row, topology]
to a dynamics vector, trained to predict the next decision step's
traffic state. A projection head with layer norm compares the dynamics
vector against a bank of learnable pattern centers by cosine
similarity; the tempered softmax over similarities gives soft
assignment weights, and their convex combination of centers is the
quantized pattern context handed to the policy router.

Losses: masked MSE on the prediction; an InfoNCE-style contrastive
term whose soft target is the (gradient-stopped) assignment; and a
diversity penalty, one minus the normalized entropy of the batch-mean
assignment, which is 0 at uniform center usage and 1 at collapse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import GluLayer, LayerNorm, Linear, Module

COSINE_EPS = 1e-8


@dataclass
class ClusterConfig:
    n_centers: int = 6
    d_hidden: int = 64
    assign_temp: float = 0.1
    contrast_temp: float = 0.1
    diversity_weight: float = 0.1


@dataclass
class ClusterOutput:
    dynamics: Tensor        # (B, d_hidden)
    prediction: Tensor      # (B, pred_dim)
    similarities: Tensor    # (B, K) cosine similarities
    weights: Tensor         # (B, K) soft assignment, rows sum to 1
    context: Tensor         # (B, d_hidden) convex combination of centers


def soft_assign(similarities: Tensor, temperature: float) -> Tensor:
    return ad.softmax(similarities, axis=-1, temperature=temperature)


def cosine_to_centers(projected: Tensor, centers: Tensor) -> Tensor:
    """Pairwise guarded cosine similarity: (B, d) x (K, d) -> (B, K)."""
    dots = ad.matmul(projected, ad.transpose(centers))
    norm_p = ad.sqrt(ad.shift(ad.sum_axis(ad.mul(projected, projected), 1), COSINE_EPS ** 2))
    norm_c = ad.sqrt(ad.shift(ad.sum_axis(ad.mul(centers, centers), 1), COSINE_EPS ** 2))
    return ad.div(dots, ad.matmul(norm_p, ad.transpose(norm_c)))


class PatternClustering(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, pred_dim: int, cfg: ClusterConfig):
        self.cfg = cfg
        self.dynamics_1 = GluLayer(rng, d_in, cfg.d_hidden)
        self.dynamics_2 = GluLayer(rng, cfg.d_hidden, cfg.d_hidden)
        self.predictor = Linear(rng, cfg.d_hidden, pred_dim)
        self.projection = Linear(rng, cfg.d_hidden, cfg.d_hidden)
        self.projection_norm = LayerNorm(cfg.d_hidden)
        raw = rng.standard_normal((cfg.n_centers, cfg.d_hidden))
        raw /= np.linalg.norm(raw, axis=1, keepdims=True)
        self.centers = Tensor(raw, requires_grad=True)

    def __call__(self, pattern_input: np.ndarray) -> ClusterOutput:
        z = self.dynamics_2(self.dynamics_1(Tensor(pattern_input)))
        prediction = self.predictor(z)
        projected = self.projection_norm(self.projection(z))
        sims = cosine_to_centers(projected, self.centers)
        weights = soft_assign(sims, self.cfg.assign_temp)
        context = ad.matmul(weights, self.centers)
        return ClusterOutput(z, prediction, sims, weights, context)


def prediction_loss(prediction: Tensor, target: np.ndarray, entry_mask: np.ndarray) -> Tensor:
    """MSE over unmasked entries of the next-step traffic state."""
    diff = ad.sub(prediction, Tensor(target))
    return ad.masked_mean(ad.mul(diff, diff), entry_mask)


def contrastive_loss(similarities: Tensor, weights: Tensor, temperature: float) -> Tensor:
    """Cross-entropy between the gradient-stopped soft assignment and the
    tempered log-softmax of similarities, averaged over the batch."""
    n = similarities.shape[0]
    target = weights.detach()
    scaled = ad.scale(similarities, 1.0 / temperature)
    shiftc = Tensor(scaled.data.max(axis=-1, keepdims=True))
    z = ad.sub(scaled, ad.repeat_cols(shiftc, scaled.shape[-1]))
    log_probs = ad.sub(z, ad.repeat_cols(ad.log(ad.sum_axis(ad.exp(z), 1)), scaled.shape[-1]))
    return ad.scale(ad.tsum(ad.mul(target, log_probs)), -1.0 / n)


def diversity_loss(weights: Tensor) -> Tensor:
    """1 - H(mean assignment) / log K; 0 at uniform usage, 1 at collapse."""
    n, k = weights.shape
    if n == 0:
        raise ValueError("diversity_loss: empty batch")
    if k == 1:
        return Tensor(np.zeros(()))
    mean_w = ad.scale(ad.matmul(Tensor(np.ones((1, n))), weights), 1.0 / n)
    entropy = ad.neg(ad.tsum(ad.mul(mean_w, ad.log(mean_w))))
    return ad.shift(ad.scale(entropy, -1.0 / np.log(k)), 1.0)


def clustering_loss(contrastive: Tensor, diversity: Tensor, diversity_weight: float) -> Tensor:
    if diversity_weight < 0:
        raise ValueError(f"diversity_weight must be >= 0, got {diversity_weight}")
    return ad.add(contrastive, ad.scale(diversity, diversity_weight))
