"""In-process federated training: scheduling, client updates, aggregation, baselines."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .domain import SplitDataset, UserSplit
from .embed_service import ProviderError, embed_sequences
from .metrics import EvalResult, rank_target, summarize
from .privacy import PRIVACY_STREAM, PerturbedSequence, Perturber
from .seqmodel import (
    AdamState,
    ContrastiveViews,
    ModelParams,
    adam_step,
    fuse_embeddings,
    init_params,
    total_loss,
    training_steps,
)
from .seqmodel.model import encode

log = logging.getLogger(__name__)

MODES = ("vanilla", "fellas", "fellas_item_only")

# Stream tags for np.random.default_rng([seed, tag, ...]). Tags are nonzero and
# distinct from the attack (7) and initialisation (8, 9) streams; numpy ignores
# trailing zeros in a seed list, so a zero tag would alias default_rng(seed).
NEGATIVES, SCHEDULE, RANDOM_SEQ, CENTRAL = 2, 3, 5, 6
PRIVACY = PRIVACY_STREAM


@dataclass(frozen=True)
class FedConfig:
    rounds: int = 20
    clients_per_step: int = 256
    local_epochs: int = 5
    lr: float = 1e-3
    neg_ratio: int = 1
    alpha: float = 0.1
    inv_epsilon: float = 0.01
    mode: str = "vanilla"
    model: str = "sasrec"
    dim: int = 8
    depth: int = 1
    max_len: int = 50
    random_sequences: int = 1
    freeze_phi: bool = False
    central_batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.model not in ("gru", "sasrec"):
            raise ValueError("model must be 'gru' or 'sasrec'")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        for name in ("clients_per_step", "local_epochs", "neg_ratio", "dim", "depth", "max_len",
                     "random_sequences", "central_batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.lr > 0 or not self.inv_epsilon > 0 or self.alpha < 0:
            raise ValueError("lr and inv_epsilon must be positive, alpha non-negative")

    @property
    def uses_item_service(self) -> bool:
        return self.mode != "vanilla"

    @property
    def uses_sequence_service(self) -> bool:
        return self.mode == "fellas"

    def frozen(self) -> frozenset:
        names = set()
        if not self.uses_item_service or self.freeze_phi:
            names |= {"phi_w", "phi_b"}
        if not self.uses_sequence_service or self.alpha == 0:
            names |= {"psi_w", "psi_b"}
        return frozenset(names)


def rng_for(seed: int, tag: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([seed, tag, *keys])


def new_model(cfg: FedConfig, num_items: int, llm_dim: int) -> ModelParams:
    return init_params(cfg.model, num_items, cfg.dim, llm_dim, cfg.depth, cfg.max_len, cfg.seed,
                       fuse=cfg.uses_item_service and not cfg.freeze_phi)


# -- scheduling ----------------------------------------------------------------

@dataclass(frozen=True)
class RoundPlan:
    round: int
    step: int
    participants: tuple[int, ...]


def schedule_epoch(users: Sequence[int], clients_per_step: int, rng: np.random.Generator,
                   round_index: int = 0) -> list[RoundPlan]:
    """Shuffle the client queue once and cut it into contiguous blocks."""
    if clients_per_step < 1:
        raise ValueError("clients_per_step must be >= 1")
    order = [users[i] for i in rng.permutation(len(users))]
    return [RoundPlan(round_index, s, tuple(order[i:i + clients_per_step]))
            for s, i in enumerate(range(0, len(order), clients_per_step))]


# -- clients -------------------------------------------------------------------

@dataclass
class ClientState:
    user: int
    train: tuple[int, ...]
    known: np.ndarray                  # every item of the user's own sequence
    perturbed: PerturbedSequence | None = None
    views: ContrastiveViews | None = None
    service_queried: bool = False
    service_failed: bool = False

    @classmethod
    def from_split(cls, split: UserSplit) -> "ClientState":
        return cls(split.user, split.train, np.unique(np.asarray(split.full, dtype=np.int64)))


def sample_negatives(rng: np.random.Generator, num_items: int, known: np.ndarray, shape) -> np.ndarray:
    """Uniform draws from items outside ``known``."""
    if known.size >= num_items:
        raise ValueError("user has interacted with every item; no negatives available")
    out = rng.integers(0, num_items, size=shape)
    bad = np.isin(out, known)
    while bad.any():
        out[bad] = rng.integers(0, num_items, size=int(bad.sum()))
        bad = np.isin(out, known)
    return out


def ensure_sequence_service(state: ClientState, llm: np.ndarray, provider, titles: Sequence[str],
                            cfg: FedConfig, perturber: Perturber | None = None) -> ClientState:
    """Query the sequence service once per client and cache the views."""
    if state.service_queried:
        return state
    state.service_queried = True
    perturber = perturber or Perturber(llm)
    prng = rng_for(cfg.seed, PRIVACY, state.user)
    state.perturbed = PerturbedSequence(
        state.user, tuple(perturber.perturb_items(state.train, 1.0 / cfg.inv_epsilon, prng)))
    rrng = rng_for(cfg.seed, RANDOM_SEQ, state.user)
    randoms = [rrng.integers(0, len(titles), size=len(state.train)) for _ in range(cfg.random_sequences)]
    lists = [[titles[i] for i in state.perturbed.items]] + [[titles[i] for i in r] for r in randoms]
    try:
        embs = embed_sequences(lists, provider)
    except (ProviderError, ValueError) as exc:
        log.warning("sequence service failed for user %d (%s); training without contrastive term",
                    state.user, exc)
        state.service_failed = True
        return state
    state.views = ContrastiveViews(embs[0].vector, np.stack([e.vector for e in embs[1:]]))
    return state


def client_train(snapshot: ModelParams, state: ClientState, cfg: FedConfig,
                 llm: np.ndarray | None = None, round_index: int = 0,
                 rng: np.random.Generator | None = None, adam: AdamState | None = None):
    """Local epochs on one user's sequence, starting from ``snapshot``.

    Returns ``(updated_params, mean_loss)``; the snapshot is not modified.
    """
    if cfg.local_epochs < 1:
        raise ValueError("local_epochs must be >= 1")
    params = snapshot.copy()
    inputs, positives = training_steps(state.train)
    if inputs.size == 0:
        return params, 0.0
    rng = rng if rng is not None else rng_for(cfg.seed, NEGATIVES, state.user, round_index)
    adam = adam if adam is not None else AdamState()
    fused = llm if cfg.uses_item_service else None
    views = state.views if cfg.uses_sequence_service else None
    alpha = cfg.alpha if views is not None else 0.0
    frozen = cfg.frozen()
    losses = []
    for _ in range(cfg.local_epochs):
        negs = sample_negatives(rng, snapshot.num_items, state.known, (inputs.size, cfg.neg_ratio))
        loss, _, _, grads = total_loss(params, inputs, positives, negs, fused, alpha, views)
        adam_step(params, grads, adam, cfg.lr, frozen=frozen)
        losses.append(loss)
    return params, float(np.mean(losses))


def aggregate(uploads: Sequence[tuple[int, ModelParams]]) -> ModelParams:
    """Unweighted mean over participants, accumulated in ascending user order.

    Computed as ``ref + sum(p - ref) / K`` with ``ref`` the lowest user's
    parameters, so identical uploads come back bit-exact.
    """
    if not uploads:
        raise ValueError("nothing to aggregate")
    ordered = sorted(uploads, key=lambda up: up[0])
    ref = ordered[0][1]
    for _, p in ordered[1:]:
        if not p.same_layout(ref):
            raise ValueError("parameter shapes differ between participants")
    out = ref.copy()
    k = len(ordered)
    for name, base in ref.arrays.items():
        acc = np.zeros_like(base)
        for _, p in ordered[1:]:
            acc += p.arrays[name] - base
        out.arrays[name] = base + acc / k
    return out


# -- evaluation ----------------------------------------------------------------

class Scorer:
    """Scores the next item for many histories with one fused table."""

    def __init__(self, params: ModelParams, llm: np.ndarray | None = None):
        self.params = params
        self.table = fuse_embeddings(params, llm)

    def __call__(self, history) -> np.ndarray:
        p = self.params
        history = np.asarray(history, dtype=np.int64)[-p.max_len:] if p.kind == "sasrec" \
            else np.asarray(history, dtype=np.int64)
        H, _ = encode(p, self.table[history])
        if p.kind == "gru":
            return H[-1] @ p["out_w"].T + p["out_b"]
        return self.table @ H[-1]


def history_and_target(u: UserSplit, split: str):
    if split == "valid":
        return u.train, u.valid_target
    if split == "test":
        return u.train + (u.valid_target,), u.test_target
    raise ValueError(f"unknown split {split!r}")


def evaluate_scores(dataset: SplitDataset, score_fn, split: str = "test",
                    users: Sequence[UserSplit] | None = None) -> EvalResult:
    ranks = []
    for u in users if users is not None else dataset.users:
        history, target = history_and_target(u, split)
        exclude = set(history) - {target}
        ranks.append(rank_target(score_fn(u, history), target, exclude))
    return summarize(ranks)


def evaluate(params: ModelParams, dataset: SplitDataset, split: str = "test",
             llm: np.ndarray | None = None) -> EvalResult:
    scorer = Scorer(params, llm)
    return evaluate_scores(dataset, lambda u, h: scorer(h), split)


def popularity_scores(dataset: SplitDataset) -> np.ndarray:
    counts = np.zeros(dataset.num_items)
    for u in dataset.users:
        np.add.at(counts, np.asarray(u.train, dtype=np.int64), 1.0)
    return counts


def evaluate_popularity(dataset: SplitDataset, split: str = "test") -> EvalResult:
    pop = popularity_scores(dataset)
    return evaluate_scores(dataset, lambda u, h: pop, split)


# -- drivers -------------------------------------------------------------------

@dataclass
class RunResult:
    params: ModelParams          # best validation HR@10
    final_params: ModelParams
    log: list = field(default_factory=list)
    test: EvalResult | None = None
    best_round: int = 0
    service_texts: int = 0


def _log_row(round_index, cfg: FedConfig, mode_name, result: EvalResult, loss):
    return {"round": round_index, "mode": mode_name, "model": cfg.model,
            "hr10": result.hr10, "ndcg10": result.ndcg10, "hr20": result.hr20,
            "ndcg20": result.ndcg20, "loss": loss}


def run_federated(dataset: SplitDataset, cfg: FedConfig, provider=None,
                  llm: np.ndarray | None = None, init: ModelParams | None = None,
                  on_round=None) -> RunResult:
    """Global rounds over the whole client queue with best-validation selection."""
    if cfg.uses_item_service and llm is None:
        raise ValueError(f"mode {cfg.mode!r} needs item embeddings")
    if cfg.uses_sequence_service and provider is None:
        raise ValueError("mode 'fellas' needs an embedding provider")
    llm_dim = llm.shape[1] if llm is not None else (getattr(provider, "dim", None) or 64)
    params = init.copy() if init is not None else new_model(cfg, dataset.num_items, llm_dim)
    states = {u.user: ClientState.from_split(u) for u in dataset.users}
    users = [u.user for u in dataset.users]
    perturber = Perturber(llm) if cfg.uses_sequence_service else None
    texts_before = getattr(provider, "texts_seen", 0)
    fused = llm if cfg.uses_item_service else None

    best, best_hr, best_round = params.copy(), -1.0, 0
    rows = []
    for r in range(cfg.rounds):
        losses = []
        for plan in schedule_epoch(users, cfg.clients_per_step, rng_for(cfg.seed, SCHEDULE, r), r):
            uploads = []
            for u in plan.participants:
                state = states[u]
                if cfg.uses_sequence_service:
                    ensure_sequence_service(state, llm, provider, dataset.catalog.titles, cfg, perturber)
                p_u, loss = client_train(params, state, cfg, llm, r)
                uploads.append((u, p_u))
                losses.append(loss)
            params = aggregate(uploads)
        val = evaluate(params, dataset, "valid", fused)
        rows.append(_log_row(r + 1, cfg, cfg.mode, val, float(np.mean(losses)) if losses else 0.0))
        log.info("round %d valid HR@10=%.4f NDCG@10=%.4f", r + 1, val.hr10, val.ndcg10)
        if val.hr10 > best_hr:
            best, best_hr, best_round = params.copy(), val.hr10, r + 1
        if on_round is not None:
            on_round(r, params)
    test = evaluate(best, dataset, "test", fused)
    texts = getattr(provider, "texts_seen", 0) - texts_before
    return RunResult(best, params, rows, test, best_round, texts)


def run_centralized(dataset: SplitDataset, cfg: FedConfig, llm: np.ndarray | None = None,
                    init: ModelParams | None = None) -> RunResult:
    """Pooled training: ``cfg.rounds`` epochs of mini-batches of users, one Adam state.

    Each user keeps one negative-sampling stream for the whole run, keyed like
    that user's round-0 client stream.
    """
    cfg_c = replace(cfg, mode="fellas_item_only" if cfg.uses_item_service else "vanilla")
    fused = llm if cfg_c.uses_item_service else None
    if cfg_c.uses_item_service and llm is None:
        raise ValueError("item fusion needs item embeddings")
    llm_dim = llm.shape[1] if llm is not None else 64
    params = init.copy() if init is not None else new_model(cfg_c, dataset.num_items, llm_dim)
    states = {u.user: ClientState.from_split(u) for u in dataset.users}
    streams = {u: rng_for(cfg.seed, NEGATIVES, u, 0) for u in states}
    steps = {u: training_steps(s.train) for u, s in states.items()}
    users = [u for u in states if steps[u][0].size > 0]
    adam = AdamState()
    frozen = cfg_c.frozen()

    best, best_hr, best_round = params.copy(), -1.0, 0
    rows = []
    for epoch in range(cfg.rounds):
        order = [users[i] for i in rng_for(cfg.seed, CENTRAL, epoch).permutation(len(users))]
        epoch_loss = []
        for i in range(0, len(order), cfg.central_batch_size):
            grads, batch_loss = None, 0.0
            for u in order[i:i + cfg.central_batch_size]:
                inputs, positives = steps[u]
                negs = sample_negatives(streams[u], dataset.num_items, states[u].known,
                                        (inputs.size, cfg.neg_ratio))
                loss, _, _, g = total_loss(params, inputs, positives, negs, fused)
                batch_loss += loss
                if grads is None:
                    grads = g
                else:
                    for k in grads:
                        grads[k] += g[k]
            adam_step(params, grads, adam, cfg.lr, frozen=frozen)
            epoch_loss.append(batch_loss)
        val = evaluate(params, dataset, "valid", fused)
        rows.append(_log_row(epoch + 1, cfg, "central", val, float(np.sum(epoch_loss))))
        if val.hr10 > best_hr:
            best, best_hr, best_round = params.copy(), val.hr10, epoch + 1
    test = evaluate(best, dataset, "test", fused)
    return RunResult(best, params, rows, test, best_round)


def zero_shot_rank(dataset: SplitDataset, provider, llm: np.ndarray, split: str = "test") -> EvalResult:
    """Rank items by cosine between their service embedding and the history's."""
    unit = llm / np.linalg.norm(llm, axis=1, keepdims=True)
    titles = dataset.catalog.titles
    histories = [history_and_target(u, split)[0] for u in dataset.users]
    embs = embed_sequences([[titles[i] for i in h] for h in histories], provider)
    queries = {u.user: e.vector for u, e in zip(dataset.users, embs)}
    return evaluate_scores(dataset, lambda u, h: unit @ queries[u.user], split)
