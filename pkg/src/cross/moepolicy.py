"""Sparse mixture-of-experts policy head.

A small router MLP scores the expert pool from [pooled phase features,
pattern context]; the top-k logits renormalize through a softmax to the
gating weights, every unselected expert stays at exactly zero weight and
receives no gradient. Selected experts (two-layer MLPs over the
per-phase features) combine as a weighted sum, and two linear heads read
the mixture: a per-phase policy logit and a pooled state value.

Regularizers: a load-balance term, the KL divergence from the batch
usage frequencies to uniform (0 when balanced, log N at single-expert
collapse); and a selection entropy term pushing each routing toward
confidence (0 for one-hot, ln 2 for an even top-2 split).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoder import masked_phase_pool
from .nn import MLP, Linear, Module
from .obs import MAX_PHASES


@dataclass
class MoeConfig:
    n_experts: int = 6
    top_k: int = 2
    router_temp: float = 1.0
    router_hidden: int = 64
    lb_weight: float = 0.001
    se_weight: float = 0.0001


@dataclass
class RoutingResult:
    selected: np.ndarray  # (B, k) expert indices, best score first
    alpha: Tensor         # (B, k) gating weights over the selection
    dense: np.ndarray     # (B, n_experts) numeric weights, exactly k nonzero per row


class ExpertMixture(Module):
    def __init__(self, rng: np.random.Generator, d_model: int, d_context: int, cfg: MoeConfig):
        if cfg.top_k > cfg.n_experts:
            raise ValueError(f"top_k {cfg.top_k} exceeds expert count {cfg.n_experts}")
        self.cfg = cfg
        self.d_model = d_model
        self.router = MLP(rng, [d_model + d_context, cfg.router_hidden, cfg.n_experts])
        self.experts = [MLP(rng, [d_model, d_model, d_model]) for _ in range(cfg.n_experts)]

    def route(self, routing_input: Tensor) -> RoutingResult:
        logits = ad.scale(self.router(routing_input), 1.0 / self.cfg.router_temp)
        k = self.cfg.top_k
        # stable argsort on negated scores: ties resolve to the lowest index
        selected = np.argsort(-logits.data, axis=1, kind="stable")[:, :k]
        alpha = ad.softmax(ad.gather_cols(logits, selected), axis=-1)
        dense = np.zeros_like(logits.data)
        np.put_along_axis(dense, selected, alpha.data, axis=1)
        return RoutingResult(selected=selected, alpha=alpha, dense=dense)

    def mix(self, phase_repr: Tensor, routing: RoutingResult) -> Tensor:
        """Weighted sum of the selected experts applied to each phase row;
        only selected experts are evaluated."""
        n_samples, k = routing.selected.shape
        total_rows = phase_repr.shape[0]
        per = total_rows // n_samples
        parts = []
        for e in range(self.cfg.n_experts):
            samples, slots = np.nonzero(routing.selected == e)
            if samples.size == 0:
                continue
            row_idx = (samples[:, None] * per + np.arange(per)).reshape(-1)
            out = self.experts[e](ad.take_rows(phase_repr, row_idx))
            coeff = ad.gather_cols(ad.take_rows(routing.alpha, samples), slots[:, None])
            coeff = ad.repeat_cols(ad.repeat_rows(coeff, per), self.d_model)
            parts.append(ad.scatter_rows(ad.mul(out, coeff), row_idx, total_rows))
        mixed = parts[0]
        for p in parts[1:]:
            mixed = ad.add(mixed, p)
        return mixed

    def dense_alpha(self, routing: RoutingResult) -> Tensor:
        """Graph-connected dense gating weights, (B, n_experts)."""
        n_samples, k = routing.selected.shape
        n = self.cfg.n_experts
        dense = None
        for slot in range(k):
            col = ad.slice_axis(routing.alpha, 1, slot, slot + 1)
            onehot = np.zeros((n_samples, n))
            onehot[np.arange(n_samples), routing.selected[:, slot]] = 1.0
            part = ad.mul(ad.repeat_cols(col, n), Tensor(onehot))
            dense = part if dense is None else ad.add(dense, part)
        return dense

    def load_balance_loss(self, routing: RoutingResult) -> Tensor:
        """KL(usage || uniform) over batch-normalized expert usage."""
        dense = self.dense_alpha(routing)
        n_samples = routing.selected.shape[0]
        n = self.cfg.n_experts
        col_sums = ad.matmul(Tensor(np.ones((1, n_samples))), dense)
        total = ad.repeat_cols(ad.reshape(ad.tsum(dense), (1, 1)), n)
        usage = ad.div(col_sums, total)
        # 0 log 0 = 0: unused experts carry no gradient path, so the guard
        # only shields the log's value.
        guard = Tensor((usage.data <= 0).astype(np.float64))
        return ad.tsum(ad.mul(usage, ad.log(ad.add(ad.scale(usage, float(n)), guard))))

    def selection_entropy_loss(self, routing: RoutingResult) -> Tensor:
        """Mean per-sample entropy of the gating weights."""
        n_samples = routing.selected.shape[0]
        return ad.scale(ad.tsum(ad.mul(routing.alpha, ad.log(routing.alpha))), -1.0 / n_samples)

    def regularizer(self, routing: RoutingResult) -> Tensor:
        return combined_moe_loss(self.load_balance_loss(routing),
                                 self.selection_entropy_loss(routing),
                                 self.cfg.lb_weight, self.cfg.se_weight)


def combined_moe_loss(load_balance: Tensor, selection_entropy: Tensor,
                      lb_weight: float, se_weight: float) -> Tensor:
    return ad.add(ad.scale(load_balance, lb_weight), ad.scale(selection_entropy, se_weight))


class SingleExpert(Module):
    """Width-matched single MLP used by the no-mixture ablation."""

    def __init__(self, rng: np.random.Generator, d_model: int):
        self.mlp = MLP(rng, [d_model, d_model, d_model])

    def mix(self, phase_repr: Tensor) -> Tensor:
        return self.mlp(phase_repr)


class Heads(Module):
    """Two linear readouts: per-phase policy logits and a pooled value."""

    def __init__(self, rng: np.random.Generator, d_model: int):
        self.d_model = d_model
        self.policy = Linear(rng, d_model, 1)
        self.value = Linear(rng, d_model, 1)

    def __call__(self, mixed: Tensor, phase_mask: np.ndarray) -> tuple[Tensor, Tensor]:
        if (np.asarray(phase_mask).sum(axis=1) == 0).any():
            raise ValueError("heads: sample with every phase masked")
        n_samples = phase_mask.shape[0]
        logits = ad.reshape(self.policy(mixed), (n_samples, MAX_PHASES))
        pooled = masked_phase_pool(mixed, phase_mask, self.d_model)
        return logits, self.value(pooled)
