"""Network building blocks: linear layers, GRU cell, layer norm, multi-head
attention, and masked-softmax helpers.

All layers operate on 2-d batches (rows are samples) and register their
parameters through the tiny Module tree so optimizers and checkpoints can
enumerate them in a stable order. Weights initialize uniform in
+-1/sqrt(fan_in); biases start at zero.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

MASK_NEG = 1e30


class Module:
    """Base with recursive, insertion-ordered parameter discovery."""

    def named_params(self) -> list[tuple[str, Tensor]]:
        out: list[tuple[str, Tensor]] = []
        for name, val in vars(self).items():
            if isinstance(val, Tensor) and val.requires_grad:
                out.append((name, val))
            elif isinstance(val, Module):
                out.extend((f"{name}.{n}", p) for n, p in val.named_params())
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.extend((f"{name}.{i}.{n}", p) for n, p in item.named_params())
        return out

    def params(self) -> list[Tensor]:
        return [p for _, p in self.named_params()]


def uniform_init(rng: np.random.Generator, fan_in: int, *shape) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Linear(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, bias: bool = True):
        self.weight = uniform_init(rng, d_in, d_in, d_out)
        self.bias = Tensor(np.zeros((1, d_out)), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = ad.matmul(x, self.weight)
        if self.bias is not None:
            out = ad.add(out, ad.repeat_rows(self.bias, out.shape[0]))
        return out


class MLP(Module):
    """Linear stack with ReLU between layers (none after the last)."""

    def __init__(self, rng: np.random.Generator, dims: list[int]):
        self.layers = [Linear(rng, dims[i], dims[i + 1]) for i in range(len(dims) - 1)]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = ad.relu(x)
        return x


class GluLayer(Module):
    """Linear projection to 2*d_out followed by a gated linear unit."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int):
        self.proj = Linear(rng, d_in, 2 * d_out)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.glu(self.proj(x))


class LayerNorm(Module):
    def __init__(self, d: int):
        self.gain = Tensor(np.ones((1, d)), requires_grad=True)
        self.shift = Tensor(np.zeros((1, d)), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        n = x.shape[0]
        normed = ad.layer_norm(x)
        return ad.add(ad.mul(normed, ad.repeat_rows(self.gain, n)),
                      ad.repeat_rows(self.shift, n))


class GRUCell(Module):
    """Single-step gated recurrent cell, hidden update per call."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_hidden: int):
        self.w_reset = uniform_init(rng, d_in, d_in, d_hidden)
        self.w_update = uniform_init(rng, d_in, d_in, d_hidden)
        self.w_cand = uniform_init(rng, d_in, d_in, d_hidden)
        self.u_reset = uniform_init(rng, d_hidden, d_hidden, d_hidden)
        self.u_update = uniform_init(rng, d_hidden, d_hidden, d_hidden)
        self.u_cand = uniform_init(rng, d_hidden, d_hidden, d_hidden)
        self.b_reset = Tensor(np.zeros((1, d_hidden)), requires_grad=True)
        self.b_update = Tensor(np.zeros((1, d_hidden)), requires_grad=True)
        self.b_cand = Tensor(np.zeros((1, d_hidden)), requires_grad=True)

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        n = x.shape[0]
        reset = ad.sigmoid(ad.add(ad.add(ad.matmul(x, self.w_reset), ad.matmul(h, self.u_reset)),
                                  ad.repeat_rows(self.b_reset, n)))
        update = ad.sigmoid(ad.add(ad.add(ad.matmul(x, self.w_update), ad.matmul(h, self.u_update)),
                                   ad.repeat_rows(self.b_update, n)))
        cand = ad.tanh(ad.add(ad.add(ad.matmul(x, self.w_cand),
                                     ad.mul(reset, ad.matmul(h, self.u_cand))),
                              ad.repeat_rows(self.b_cand, n)))
        one_minus = ad.shift(ad.neg(update), 1.0)
        return ad.add(ad.mul(one_minus, cand), ad.mul(update, h))


class MultiHeadAttention(Module):
    """Multi-head scaled dot-product cross-attention.

    Two entry points share the same projections: :meth:`single` runs one
    (n_q, n_k) attention with an optional key mask; :meth:`batched_one_key`
    runs a batch of independent attentions that each have exactly one
    key/value row, which is the hot path in the traffic encoder.
    """

    def __init__(self, rng: np.random.Generator, d_model: int, n_heads: int):
        if d_model % n_heads:
            raise ValueError(f"d_model {d_model} not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.w_query = uniform_init(rng, d_model, d_model, d_model)
        self.w_key = uniform_init(rng, d_model, d_model, d_model)
        self.w_value = uniform_init(rng, d_model, d_model, d_model)
        self.w_out = uniform_init(rng, d_model, d_model, d_model)

    def _split(self, t: Tensor, head: int) -> Tensor:
        lo = head * self.d_head
        return ad.slice_axis(t, 1, lo, lo + self.d_head)

    def single(self, query: Tensor, key: Tensor, value: Tensor,
               key_mask: np.ndarray | None = None) -> Tensor:
        q = ad.matmul(query, self.w_query)
        k = ad.matmul(key, self.w_key)
        v = ad.matmul(value, self.w_value)
        scale = 1.0 / np.sqrt(self.d_head)
        outs = []
        for head in range(self.n_heads):
            qh, kh, vh = self._split(q, head), self._split(k, head), self._split(v, head)
            scores = ad.scale(ad.matmul(qh, ad.transpose(kh)), scale)
            if key_mask is not None:
                bias = (np.asarray(key_mask, dtype=np.float64) - 1.0) * MASK_NEG
                scores = ad.add(scores, Tensor(np.tile(bias, (scores.shape[0], 1))))
            weights = ad.softmax(scores, axis=-1)
            outs.append(ad.matmul(weights, vh))
        return ad.matmul(ad.concat(outs, axis=1), self.w_out)

    def batched_one_key(self, query: Tensor, key_value: Tensor, queries_per: int) -> Tensor:
        """query is (B*P, d); key_value is (B, d); sample b's P query rows
        attend over its single key/value row."""
        q = ad.matmul(query, self.w_query)
        k = ad.repeat_rows(ad.matmul(key_value, self.w_key), queries_per)
        v = ad.repeat_rows(ad.matmul(key_value, self.w_value), queries_per)
        scale = 1.0 / np.sqrt(self.d_head)
        outs = []
        for head in range(self.n_heads):
            qh, kh, vh = self._split(q, head), self._split(k, head), self._split(v, head)
            scores = ad.scale(ad.sum_axis(ad.mul(qh, kh), 1), scale)
            weights = ad.softmax(scores, axis=-1)  # one key: identically 1
            outs.append(ad.mul(ad.repeat_cols(weights, self.d_head), vh))
        return ad.matmul(ad.concat(outs, axis=1), self.w_out)


# ---------------------------------------------------------------------------
# masked categorical helpers


def mask_bias(mask: np.ndarray) -> np.ndarray:
    """Additive logit bias: 0 where mask is true, -1e30 where false."""
    return (np.asarray(mask, dtype=np.float64) - 1.0) * MASK_NEG


def masked_softmax(logits: Tensor, mask: np.ndarray) -> Tensor:
    """Row softmax with masked entries receiving exactly zero probability."""
    if not np.asarray(mask).any(axis=-1).all():
        raise ValueError("masked_softmax: some row has no valid entry")
    return ad.softmax(ad.add(logits, Tensor(mask_bias(mask))), axis=-1)


def masked_log_softmax(logits: Tensor, mask: np.ndarray) -> Tensor:
    """Row log-softmax over the unmasked entries (masked entries ~ -1e30)."""
    if not np.asarray(mask).any(axis=-1).all():
        raise ValueError("masked_log_softmax: some row has no valid entry")
    biased = ad.add(logits, Tensor(mask_bias(mask)))
    shiftc = Tensor(biased.data.max(axis=-1, keepdims=True))
    z = ad.sub(biased, ad.repeat_cols(shiftc, biased.shape[-1]))
    lse = ad.log(ad.sum_axis(ad.exp(z), 1))
    return ad.sub(z, ad.repeat_cols(lse, biased.shape[-1]))


def masked_entropy_rows(logits: Tensor, mask: np.ndarray) -> Tensor:
    """Per-row Shannon entropy of the masked categorical, shape (B, 1)."""
    probs = masked_softmax(logits, mask)
    logp = masked_log_softmax(logits, mask)
    contrib = ad.mul(ad.mul(probs, logp), Tensor(np.asarray(mask, dtype=np.float64)))
    return ad.neg(ad.sum_axis(contrib, 1))


def categorical_sample(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Sample an index from a probability row via inverse CDF."""
    cdf = np.cumsum(probs)
    return int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right").clip(0, len(probs) - 1))
