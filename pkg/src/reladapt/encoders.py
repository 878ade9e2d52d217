"""Shared input encoders for the transformer models.

Entities enter as (attribute id, noun id, position): the ids index embedding
tables and the position goes through a linear projection; the three vectors
concatenate into one entity token. Language tokens get word + learned
positional embeddings. A small segment table marks which modality each token
belongs to, and entity tokens carry no positional embedding so the encoder
stays permutation-equivariant over entities.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

MAX_TOKENS = 40

SEG_ENTITY = 0
SEG_ACTION = 1
SEG_LANGUAGE = 2


class EntityEncoder(ad.Module):
    """(attribute, noun, position) -> one dense vector per entity."""

    def __init__(self, n_attrs: int, n_nouns: int, attr_dim: int, pos_dim: int,
                 rng: np.random.Generator):
        self.attr_emb = ad.Embedding(n_attrs, attr_dim, rng)
        self.noun_emb = ad.Embedding(n_nouns, attr_dim, rng)
        self.pos_proj = ad.Linear(2, pos_dim, rng)
        self.out_dim = 2 * attr_dim + pos_dim

    def __call__(self, attr_ids: np.ndarray, noun_ids: np.ndarray,
                 positions) -> Tensor:
        pos = ad.ensure_tensor(positions)
        return ad.concat(
            [self.attr_emb(attr_ids), self.noun_emb(noun_ids), self.pos_proj(pos)],
            axis=-1,
        )


class LanguageEncoder(ad.Module):
    """Token + learned positional embeddings; the downstream transformer is
    shared with the entity tokens, so this stays a lookup."""

    def __init__(self, vocab_size: int, dim: int, rng: np.random.Generator,
                 max_tokens: int = MAX_TOKENS):
        self.token_emb = ad.Embedding(vocab_size, dim, rng)
        self.pos_emb = ad.Embedding(max_tokens, dim, rng)
        self.max_tokens = max_tokens

    def __call__(self, token_ids: np.ndarray) -> Tensor:
        length = token_ids.shape[1]
        if length > self.max_tokens:
            raise ValueError(f"token sequence length {length} exceeds {self.max_tokens}")
        return self.token_emb(token_ids) + self.pos_emb(np.arange(length))


def clip_tokens(token_ids: list[int], max_tokens: int = MAX_TOKENS) -> list[int]:
    return token_ids[:max_tokens]
