"""Actor and critic network assembly.

Both networks share one architecture — encoder, optional pattern
clustering, optional expert mixture, and the two linear heads — but own
disjoint parameters; every intersection in every scenario runs the same
shared parameter set. Ablation variants drop the pattern context
(replaced by a zero vector) or replace the expert pool with one
width-matched MLP.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import assign_params, load_params, save_params
from .clustering import ClusterConfig, ClusterOutput, PatternClustering
from .encoder import EncoderConfig, TrafficEncoder, masked_phase_pool
from .moepolicy import ExpertMixture, Heads, MoeConfig, RoutingResult, SingleExpert
from .nn import Module, categorical_sample, masked_log_softmax, masked_softmax
from .obs import PATTERN_INPUT_DIM, STATE_DIM, ObsBatch

KIND_FULL = "cross"
KIND_NO_PCC = "cross-no-pcc"
KIND_NO_MOE = "cross-no-moe"
AGENT_KINDS = (KIND_FULL, KIND_NO_PCC, KIND_NO_MOE)


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    moe: MoeConfig = field(default_factory=MoeConfig)

    @staticmethod
    def tiny() -> "ModelConfig":
        """Width-8 configuration for gradient checks and fast tests."""
        return ModelConfig(
            encoder=EncoderConfig(d_model=8, n_heads=2),
            cluster=ClusterConfig(n_centers=3, d_hidden=8),
            moe=MoeConfig(n_experts=3, top_k=2, router_hidden=8),
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "ModelConfig":
        raw = json.loads(text)
        return ModelConfig(
            encoder=EncoderConfig(**raw["encoder"]),
            cluster=ClusterConfig(**raw["cluster"]),
            moe=MoeConfig(**raw["moe"]),
        )


@dataclass
class NetOutput:
    logits: Tensor                     # (B, max phases), pre-mask
    value: Tensor                      # (B, 1)
    new_hidden: Tensor                 # (B, d_model)
    cluster: ClusterOutput | None
    routing: RoutingResult | None


class PolicyNetwork(Module):
    """One shared-parameter network: policy and value readouts over the
    encoder / clustering / mixture stack."""

    def __init__(self, rng: np.random.Generator, config: ModelConfig,
                 use_pattern: bool = True, use_mixture: bool = True):
        self.config = config
        self.use_pattern = use_pattern
        self.use_mixture = use_mixture
        d = config.encoder.d_model
        self.encoder = TrafficEncoder(rng, config.encoder)
        self.clustering = (
            PatternClustering(rng, PATTERN_INPUT_DIM, STATE_DIM, config.cluster)
            if use_pattern else None
        )
        if use_mixture:
            self.mixture = ExpertMixture(rng, d, config.cluster.d_hidden, config.moe)
        else:
            self.single = SingleExpert(rng, d)
        self.heads = Heads(rng, d)

    def initial_hidden(self, batch_size: int = 1) -> np.ndarray:
        return self.encoder.initial_hidden(batch_size)

    def forward(self, batch: ObsBatch, hidden: np.ndarray) -> NetOutput:
        d = self.config.encoder.d_model
        phase_repr, new_hidden = self.encoder(batch, hidden)
        if self.clustering is not None:
            cluster_out = self.clustering(batch.pattern_input)
            context = cluster_out.context
        else:
            cluster_out = None
            context = Tensor(np.zeros((batch.size, self.config.cluster.d_hidden)))
        if self.use_mixture:
            pooled = masked_phase_pool(phase_repr, batch.phase_mask, d)
            routing = self.mixture.route(ad.concat([pooled, context], axis=1))
            mixed = self.mixture.mix(phase_repr, routing)
        else:
            routing = None
            mixed = self.single.mix(phase_repr)
        logits, value = self.heads(mixed, batch.phase_mask)
        return NetOutput(logits, value, new_hidden, cluster_out, routing)


class AgentStack:
    """Actor plus critic with disjoint parameters, one of the three kinds."""

    def __init__(self, kind: str = KIND_FULL, config: ModelConfig | None = None, seed: int = 0):
        if kind not in AGENT_KINDS:
            raise ValueError(f"unknown agent kind {kind!r}; expected one of {AGENT_KINDS}")
        self.kind = kind
        self.config = config or ModelConfig()
        self.seed = seed
        use_pattern = kind != KIND_NO_PCC
        use_mixture = kind != KIND_NO_MOE
        rng_actor = np.random.default_rng(np.random.SeedSequence([seed, 0]))
        rng_critic = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        self.actor = PolicyNetwork(rng_actor, self.config, use_pattern, use_mixture)
        self.critic = PolicyNetwork(rng_critic, self.config, use_pattern, use_mixture)

    def named_params(self) -> list[tuple[str, Tensor]]:
        out = [(f"actor/{n}", p) for n, p in self.actor.named_params()]
        out += [(f"critic/{n}", p) for n, p in self.critic.named_params()]
        return out

    # -- rollout-time helpers (no gradient graphs) ---------------------------

    def act(self, batch: ObsBatch, hidden: np.ndarray,
            rng: np.random.Generator | None = None):
        """Sample (or take greedily, when rng is None) one action per row.

        Returns (actions, log_probs, new_hidden).
        """
        with ad.no_grad():
            out = self.actor.forward(batch, hidden)
            probs = masked_softmax(out.logits, batch.phase_mask).data
            logp = masked_log_softmax(out.logits, batch.phase_mask).data
        if rng is None:
            actions = np.argmax(probs, axis=1)
        else:
            actions = np.array([categorical_sample(p, rng) for p in probs], dtype=np.intp)
        rows = np.arange(batch.size)
        return actions, logp[rows, actions], out.new_hidden.data

    def values(self, batch: ObsBatch, hidden: np.ndarray):
        """Critic values without a graph. Returns (values, new_hidden)."""
        with ad.no_grad():
            out = self.critic.forward(batch, hidden)
        return out.value.data[:, 0], out.new_hidden.data

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        named = self.named_params()
        meta = json.dumps({"kind": self.kind, "seed": self.seed,
                           "config": json.loads(self.config.to_json())})
        save_params(path, named + [("__meta__", Tensor(np.frombuffer(
            meta.encode(), dtype=np.uint8).astype(np.float64)))])

    @staticmethod
    def load(path) -> "AgentStack":
        loaded = load_params(path)
        if "__meta__" not in loaded:
            raise ValueError(f"checkpoint {path} has no metadata entry")
        meta = json.loads(bytes(loaded.pop("__meta__").astype(np.uint8)).decode())
        stack = AgentStack(kind=meta["kind"],
                           config=ModelConfig.from_json(json.dumps(meta["config"])),
                           seed=int(meta["seed"]))
        assign_params(stack.named_params(), loaded)
        return stack
