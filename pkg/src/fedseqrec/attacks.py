"""Interacted-item inference attacks against perturbed sequences.

SIA: the embedding service maps each observed item to its nearest catalog
item. SIAUI: the service and the aggregation server collude, restricting
guesses to items whose ID embedding changed in the client's upload and
removing each guess from that pool.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .privacy import Perturber, random_replacement, unit_rows
from .seqmodel import ModelParams

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
ITEM_TABLES = ("item_emb", "out_w", "out_b")
DEFAULT_GRID = (0.1, 0.01, 0.001)
RANDOM_SETTING = "random"
ATTACKS = ("SIA", "SIAUI")

# stream tag for attack-time perturbations, disjoint from fedsim's tags
ATTACK_STREAM = 7


def sia_infer(observed: Sequence[int], item_embeddings: np.ndarray, unit: np.ndarray | None = None) -> list[int]:
    if len(observed) == 0:
        return []
    unit = unit_rows(item_embeddings) if unit is None else unit
    sims = unit[np.asarray(observed)] @ unit.T
    return [int(i) for i in np.argmax(sims, axis=1)]


def trained_items(uploaded: ModelParams, snapshot: ModelParams, tol: float = DEFAULT_TOL) -> set[int]:
    """Items whose row moved by more than ``tol`` (max-abs) in any item-indexed table.

    That is the ID embedding table and, for the GRU variant, the per-item rows
    of the output head, which move for positives and negatives.
    """
    if not uploaded.same_layout(snapshot):
        raise ValueError("parameter shapes differ")
    moved = np.zeros(snapshot.num_items, dtype=bool)
    for name in ITEM_TABLES:
        if name in snapshot.arrays:
            delta = np.abs(uploaded[name] - snapshot[name]).reshape(snapshot.num_items, -1)
            moved |= delta.max(axis=1) > tol
    return {int(i) for i in np.flatnonzero(moved)}


def siaui_infer(observed: Sequence[int], item_embeddings: np.ndarray, pool: set[int],
                unit: np.ndarray | None = None) -> list[int]:
    """Greedy guesses drawn without replacement from ``pool``.

    Once the pool is exhausted the remaining positions fall back to SIA over
    the full catalog.
    """
    if not pool:
        raise ValueError("guess pool is empty")
    unit = unit_rows(item_embeddings) if unit is None else unit
    remaining = np.array(sorted(pool), dtype=np.int64)
    out = []
    for pos, item in enumerate(observed):
        if remaining.size == 0:
            log.info("guess pool exhausted at position %d; falling back to SIA", pos)
            out.extend(sia_infer(list(observed[pos:]), item_embeddings, unit))
            break
        sims = unit[remaining] @ unit[item]
        k = int(np.argmax(sims))
        out.append(int(remaining[k]))
        remaining = np.delete(remaining, k)
    return out


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


MATCHINGS = ("positional", "multiset")


def multiset_overlap(a: Sequence[int], b: Sequence[int]) -> int:
    return sum((Counter(a) & Counter(b)).values())


def positional_overlap(a: Sequence[int], b: Sequence[int]) -> int:
    return sum(x == y for x, y in zip(a, b))


def overlap(a: Sequence[int], b: Sequence[int], matching: str = "positional") -> int:
    """Correct guesses: same item at the same position, or multiset intersection size."""
    if matching == "positional":
        return positional_overlap(a, b)
    if matching == "multiset":
        return multiset_overlap(a, b)
    raise ValueError(f"unknown matching {matching!r}; expected one of {MATCHINGS}")


def user_prf(inferred: Sequence[int], truth: Sequence[int], matching: str = "positional") -> PRF:
    m = overlap(inferred, truth, matching)
    p = m / len(inferred) if inferred else 0.0
    r = m / len(truth) if truth else 0.0
    return PRF(p, r, _f1(p, r))


def attack_f1(inferred: Sequence[Sequence[int]], truth: Sequence[Sequence[int]], average: str = "micro",
              matching: str = "positional") -> PRF:
    """Precision/recall/F1 of inferred item lists, micro- or macro-averaged over users.

    ``positional`` matching counts a guess as correct when it names the
    item actually at that position; ``multiset`` ignores order and counts the
    multiset intersection.
    """
    if len(inferred) != len(truth):
        raise ValueError("need one inferred list per user")
    if average == "micro":
        m = sum(overlap(a, b, matching) for a, b in zip(inferred, truth))
        n_inf = sum(len(a) for a in inferred)
        n_true = sum(len(b) for b in truth)
        p = m / n_inf if n_inf else 0.0
        r = m / n_true if n_true else 0.0
        return PRF(p, r, _f1(p, r))
    if average == "macro":
        per = [user_prf(a, b, matching) for a, b in zip(inferred, truth)]
        if not per:
            return PRF(0.0, 0.0, 0.0)
        p = float(np.mean([x.precision for x in per]))
        r = float(np.mean([x.recall for x in per]))
        return PRF(p, r, float(np.mean([x.f1 for x in per])))
    raise ValueError(f"unknown averaging {average!r}")


@dataclass
class AttackReport:
    attack: str
    setting: str
    users: list = field(default_factory=list)
    inferred: list = field(default_factory=list)
    truth: list = field(default_factory=list)

    def add(self, user: int, inferred: Sequence[int], truth: Sequence[int]) -> None:
        self.users.append(user)
        self.inferred.append(list(inferred))
        self.truth.append(list(truth))

    def per_user(self, matching: str = "positional") -> list[PRF]:
        return [user_prf(a, b, matching) for a, b in zip(self.inferred, self.truth)]

    def summary(self, average: str = "micro", matching: str = "positional") -> PRF:
        return attack_f1(self.inferred, self.truth, average, matching)


def run_attack_suite(dataset, item_embeddings: np.ndarray, snapshot: ModelParams, cfg,
                     inv_epsilons: Sequence[float] = DEFAULT_GRID, users=None) -> list[AttackReport]:
    """SIA and SIAUI over every user for each noise level plus random replacement.

    Each user's guess pool comes from one local training pass started at
    ``snapshot`` (what a colluding server would observe). Contrastive views
    only add gradient to rows already touched by the recommendation loss, so
    the pass runs without them and needs no provider.
    """
    from dataclasses import replace

    from .fedsim import ClientState, client_train

    pool_cfg = replace(cfg, mode="fellas_item_only") if cfg.uses_sequence_service else cfg
    fused = item_embeddings if pool_cfg.uses_item_service else None
    unit = unit_rows(item_embeddings)
    perturber = Perturber(item_embeddings)
    settings = [str(e) for e in inv_epsilons] + [RANDOM_SETTING]
    reports = {(a, s): AttackReport(a, s) for s in settings for a in ATTACKS}
    for split in users if users is not None else dataset.users:
        state = ClientState.from_split(split)
        uploaded, _ = client_train(snapshot, state, pool_cfg, fused, 0)
        pool = trained_items(uploaded, snapshot)
        truth = list(split.train)
        for k, setting in enumerate(settings):
            rng = np.random.default_rng([cfg.seed, ATTACK_STREAM, split.user, k])
            if setting == RANDOM_SETTING:
                observed = list(random_replacement(truth, dataset.num_items, rng))
            else:
                observed = perturber.perturb_items(truth, 1.0 / float(setting), rng)
            reports[("SIA", setting)].add(split.user, sia_infer(observed, item_embeddings, unit), truth)
            reports[("SIAUI", setting)].add(split.user, siaui_infer(observed, item_embeddings, pool, unit), truth)
    return [reports[(a, s)] for s in settings for a in ATTACKS]


REPORT_HEADER = ("user", "attack", "inv_epsilon", "precision", "recall", "f1")


def report_rows(reports: Sequence[AttackReport], average: str = "micro",
                matching: str = "positional") -> list[tuple]:
    """Per-user rows followed by one summary row (user ``ALL``) per report."""
    rows = []
    for rep in reports:
        for user, prf in zip(rep.users, rep.per_user(matching)):
            rows.append((user, rep.attack, rep.setting, prf.precision, prf.recall, prf.f1))
    for rep in reports:
        prf = rep.summary(average, matching)
        rows.append(("ALL", rep.attack, rep.setting, prf.precision, prf.recall, prf.f1))
    return rows
