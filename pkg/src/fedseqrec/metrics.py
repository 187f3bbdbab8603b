"""Full-catalog ranking metrics: HR@K and NDCG@K for one held-out target per user."""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Iterable, Sequence

import numpy as np

CUTOFFS = (10, 20)


def rank_target(scores: np.ndarray, target: int, exclude: Iterable[int] = ()) -> int:
    """1-based rank of ``target`` among non-excluded items.

    Higher score ranks first; equal scores rank the lower item id first.
    """
    scores = np.asarray(scores)
    excl = np.zeros(scores.shape[0], dtype=bool)
    excl_idx = np.fromiter(exclude, dtype=np.int64)
    if excl_idx.size:
        excl[excl_idx] = True
    if excl[target]:
        raise ValueError(f"target {target} is in the exclusion set")
    s = scores[target]
    ahead = (scores > s) | ((scores == s) & (np.arange(scores.shape[0]) < target))
    return int(np.count_nonzero(ahead & ~excl)) + 1


def hr_ndcg(ranks: Sequence[int], k: int) -> tuple[float, float]:
    """Mean HR@k and NDCG@k over 1-based target ranks.

    >>> hr_ndcg([1], 10)
    (1.0, 1.0)
    >>> round(hr_ndcg([2], 10)[1], 4)
    0.6309
    >>> hr_ndcg([11], 10)
    (0.0, 0.0)
    """
    ranks = np.asarray(ranks, dtype=np.int64)
    if ranks.size == 0:
        return 0.0, 0.0
    if ranks.min() < 1:
        raise ValueError("ranks are 1-based")
    hit = ranks <= k
    gain = np.where(hit, 1.0 / np.log2(ranks + 1.0), 0.0)
    return float(hit.mean()), float(gain.mean())


@dataclass(frozen=True)
class EvalResult:
    hr10: float
    ndcg10: float
    hr20: float
    ndcg20: float
    users: int

    def as_dict(self) -> dict:
        return asdict(self)


def summarize(ranks: Sequence[int]) -> EvalResult:
    hr10, n10 = hr_ndcg(ranks, 10)
    hr20, n20 = hr_ndcg(ranks, 20)
    return EvalResult(hr10, n10, hr20, n20, len(ranks))
