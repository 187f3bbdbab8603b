"""Metric-DP (d_X-privacy) item replacement over an embedding table."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# stream tag shared with the federated driver so both perturb identically
PRIVACY_STREAM = 4


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @classmethod
    def from_inverse(cls, inv_epsilon: float, seed: int = 0) -> "PrivacyParams":
        return cls(1.0 / inv_epsilon, seed)


@dataclass(frozen=True)
class PerturbedSequence:
    user: int
    items: tuple[int, ...]


def sample_noise(dim: int, epsilon: float, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw z with density proportional to exp(-epsilon * ||z||) in ``dim`` dimensions.

    Direction is uniform on the sphere; the radius is Gamma(dim, scale=1/epsilon).
    """
    if dim < 1 or not epsilon > 0:
        raise ValueError("need dim >= 1 and epsilon > 0")
    n = 1 if size is None else size
    direction = rng.standard_normal((n, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = rng.gamma(shape=dim, scale=1.0 / epsilon, size=n)
    z = direction * radius[:, None]
    return z[0] if size is None else z


def unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero-norm embedding row")
    return matrix / norms


def nearest_by_cosine(query: np.ndarray, unit_table: np.ndarray) -> int:
    """Row of ``unit_table`` with the largest cosine to ``query``; lowest index on ties."""
    return int(np.argmax(unit_table @ query))


class Perturber:
    """Replaces items with the catalog item closest to their noised embedding."""

    def __init__(self, item_embeddings: np.ndarray):
        self.table = np.asarray(item_embeddings, dtype=np.float64)
        if not np.all(np.isfinite(self.table)):
            raise ValueError("item embeddings must be finite")
        self.unit = unit_rows(self.table)

    def perturb_item(self, item: int, epsilon: float, rng: np.random.Generator,
                     noise: np.ndarray | None = None) -> int:
        base = self.table[item]
        z = sample_noise(base.shape[0], epsilon, rng) if noise is None else noise
        vec = base + z
        if not np.any(vec):
            if noise is not None:
                raise ValueError("perturbed vector has zero norm")
            vec = base + sample_noise(base.shape[0], epsilon, rng)
            if not np.any(vec):
                raise ValueError("perturbed vector has zero norm after resampling")
        # argmax cosine is scale invariant in the query, so no need to normalise it
        return nearest_by_cosine(vec, self.unit)

    def perturb_items(self, items: Sequence[int], epsilon: float, rng: np.random.Generator) -> list[int]:
        items = np.asarray(items, dtype=np.int64)
        if items.size == 0:
            return []
        z = sample_noise(self.table.shape[1], epsilon, rng, size=items.size)
        vecs = self.table[items] + z
        zero = ~np.any(vecs, axis=1)
        if np.any(zero):
            vecs[zero] = self.table[items[zero]] + sample_noise(self.table.shape[1], epsilon, rng,
                                                                size=int(zero.sum()))
            if not np.all(np.any(vecs, axis=1)):
                raise ValueError("perturbed vector has zero norm after resampling")
        return [int(i) for i in np.argmax(vecs @ self.unit.T, axis=1)]

    def perturb_sequence(self, user: int, items: Sequence[int], params: PrivacyParams,
                         rng: np.random.Generator | None = None) -> PerturbedSequence:
        if len(items) == 0:
            raise ValueError("cannot perturb an empty sequence")
        if rng is None:
            rng = np.random.default_rng([params.seed, PRIVACY_STREAM, user])
        return PerturbedSequence(user, tuple(self.perturb_items(items, params.epsilon, rng)))


def perturb_item(item: int, item_embeddings: np.ndarray, epsilon: float,
                 rng: np.random.Generator, noise: np.ndarray | None = None) -> int:
    return Perturber(item_embeddings).perturb_item(item, epsilon, rng, noise)


def perturb_sequence(user: int, items: Sequence[int], item_embeddings: np.ndarray,
                     params: PrivacyParams, rng: np.random.Generator | None = None) -> PerturbedSequence:
    return Perturber(item_embeddings).perturb_sequence(user, items, params, rng)


def random_replacement(items: Sequence[int], num_items: int, rng: np.random.Generator) -> tuple[int, ...]:
    """Baseline perturbation: each item replaced by a uniform draw among the other items."""
    items = np.asarray(items, dtype=np.int64)
    draws = rng.integers(0, num_items - 1, size=items.size)
    draws += draws >= items
    return tuple(int(i) for i in draws)
