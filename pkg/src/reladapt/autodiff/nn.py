"""Neural network layers on top of the tape engine.

Initialization conventions: linear weights uniform in +/- 1/sqrt(fan_in),
embedding tables normal(0, 0.02). Layers that need randomness at call time
(dropout) take an explicit numpy Generator so runs are reproducible.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    """Base class; parameters are discovered by attribute walk, in
    attribute insertion order, so traversal is deterministic."""

    def named_parameters(self, prefix: str = ""):
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{name}.{i}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise KeyError(f"state dict mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"parameter {name}: shape {arr.shape} != {p.shape}")
            p.data = arr.copy()


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(in_dim)
        self.weight = parameter(rng.uniform(-bound, bound, size=(in_dim, out_dim)))
        self.bias = parameter(np.zeros(out_dim))

    def __call__(self, x: Tensor) -> Tensor:
        return T.matmul(x, self.weight) + self.bias


class Embedding(Module):
    def __init__(self, num_rows: int, dim: int, rng: np.random.Generator,
                 std: float = 0.02):
        self.weight = parameter(rng.normal(0.0, std, size=(num_rows, dim)))

    def __call__(self, ids: np.ndarray) -> Tensor:
        return T.embedding(self.weight, ids)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = parameter(np.ones(dim))
        self.shift = parameter(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        inv = (var + self.eps) ** -0.5
        return centered * inv * self.gain + self.shift


class MLP(Module):
    """Stack of linear layers with ReLU between them (none after the last)."""

    def __init__(self, dims: list[int], rng: np.random.Generator, activation: str = "relu"):
        self.layers = [Linear(dims[i], dims[i + 1], rng) for i in range(len(dims) - 1)]
        self.activation = activation

    def __call__(self, x: Tensor) -> Tensor:
        act = T.relu if self.activation == "relu" else T.tanh
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = act(x)
        return x


class MultiHeadSelfAttention(Module):
    def __init__(self, dim: int, n_heads: int, dropout_p: float, rng: np.random.Generator):
        if dim % n_heads != 0:
            raise T.ShapeError(
                f"attention: model dim {dim} not divisible by {n_heads} heads"
            )
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.dropout_p = dropout_p
        self.q_proj = Linear(dim, dim, rng)
        self.k_proj = Linear(dim, dim, rng)
        self.v_proj = Linear(dim, dim, rng)
        self.out_proj = Linear(dim, dim, rng)

    def __call__(self, x: Tensor, mask: np.ndarray | None, train: bool, rng) -> Tensor:
        B, L, D = x.shape
        H, Hd = self.n_heads, self.head_dim

        def split(t: Tensor) -> Tensor:
            return T.transpose(T.reshape(t, (B, L, H, Hd)), (0, 2, 1, 3))

        q, k, v = split(self.q_proj(x)), split(self.k_proj(x)), split(self.v_proj(x))
        scores = T.matmul(q, T.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(Hd))
        if mask is not None:
            # additive mask, -inf-like on padded key positions; [B, 1, 1, L]
            scores = scores + mask
        attn = T.softmax(scores, axis=-1)
        if train and self.dropout_p > 0.0:
            attn = T.dropout(attn, self.dropout_p, rng)
        mixed = T.matmul(attn, v)
        mixed = T.reshape(T.transpose(mixed, (0, 2, 1, 3)), (B, L, D))
        return self.out_proj(mixed)


class TransformerEncoderLayer(Module):
    """Pre-norm encoder block: LayerNorm feeds each sublayer and the residual
    stream stays unnormalized, which optimizes stably at a flat learning
    rate (no warmup schedule in this codebase)."""

    def __init__(self, dim: int, n_heads: int, ff_dim: int, dropout_p: float, rng):
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadSelfAttention(dim, n_heads, dropout_p, rng)
        self.norm2 = LayerNorm(dim)
        self.ff1 = Linear(dim, ff_dim, rng)
        self.ff2 = Linear(ff_dim, dim, rng)
        self.dropout_p = dropout_p

    def __call__(self, x: Tensor, mask, train: bool, rng) -> Tensor:
        h = self.attn(self.norm1(x), mask, train, rng)
        if train and self.dropout_p > 0.0:
            h = T.dropout(h, self.dropout_p, rng)
        x = x + h
        h = self.ff2(T.relu(self.ff1(self.norm2(x))))
        if train and self.dropout_p > 0.0:
            h = T.dropout(h, self.dropout_p, rng)
        return x + h


class TransformerEncoder(Module):
    """Stack of self-attention encoder blocks over a [batch, seq, dim] input,
    with a final LayerNorm on the way out (pre-norm convention).

    ``mask`` is an additive attention mask broadcastable to
    [batch, heads, query, key]; pass None when nothing is padded. Dropout is
    active only when ``train`` is set, drawing masks from ``rng``.
    """

    def __init__(self, dim: int, n_layers: int, n_heads: int, ff_dim: int,
                 dropout_p: float, rng: np.random.Generator):
        self.blocks = [
            TransformerEncoderLayer(dim, n_heads, ff_dim, dropout_p, rng)
            for _ in range(n_layers)
        ]
        self.final_norm = LayerNorm(dim)

    def __call__(self, x: Tensor, mask: np.ndarray | None = None,
                 train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        if train and rng is None:
            raise ValueError("train-mode transformer needs an rng for dropout")
        for block in self.blocks:
            x = block(x, mask, train, rng)
        return self.final_norm(x)


def padding_mask(token_ids: np.ndarray, pad_id: int = 0, lead: int = 0) -> np.ndarray | None:
    """Additive attention mask hiding padded token positions.

    ``lead`` is the number of always-visible positions (entity/action tokens)
    prepended before the token ids. Returns None when nothing is padded.
    """
    if not (token_ids == pad_id).any():
        return None
    B, L = token_ids.shape
    visible = np.ones((B, lead + L), dtype=bool)
    visible[:, lead:] = token_ids != pad_id
    mask = np.where(visible, 0.0, -1e9)
    return mask[:, None, None, :]
