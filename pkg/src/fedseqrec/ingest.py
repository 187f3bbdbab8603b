"""Raw review-log parsing, sequence building, and synthetic Markov datasets."""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .domain import (
    DEFAULT_MAX_SEQ_LEN,
    Catalog,
    InteractionSequence,
    SplitDataset,
    remap_ids,
    split_leave_two,
)

log = logging.getLogger(__name__)

MIN_SEQ_LEN = 3


@dataclass(frozen=True)
class RawInteraction:
    user_key: str
    item_key: str
    timestamp: int


@dataclass
class ParseResult:
    records: list
    skipped: int = 0

    def __len__(self):
        return len(self.records)


def parse_interactions(lines: Iterable[str]) -> ParseResult:
    """Parse JSON-lines records with ``user``, ``item`` and ``timestamp`` fields.

    Blank lines are ignored; anything else that fails to parse is counted in
    ``skipped``.
    """
    records, skipped = [], 0
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            rec = RawInteraction(str(obj["user"]), str(obj["item"]), int(obj["timestamp"]))
        except (ValueError, KeyError, TypeError):
            skipped += 1
            log.debug("skipping malformed interaction on line %d", lineno)
            continue
        records.append(rec)
    if skipped:
        log.warning("skipped %d malformed interaction lines", skipped)
    return ParseResult(records, skipped)


def parse_catalog(lines: Iterable[str]) -> tuple[dict, int]:
    """Parse ``{"item", "title"}`` lines into a key -> title dict (last wins)."""
    titles, skipped = {}, 0
    for line in lines:
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            key, title = str(obj["item"]), str(obj["title"]).strip()
        except (ValueError, KeyError, TypeError):
            skipped += 1
            continue
        if not title:
            skipped += 1
            continue
        titles[key] = title
    return titles, skipped


def read_interactions(path) -> ParseResult:
    with open(path, encoding="utf-8") as fh:
        return parse_interactions(fh)


def read_catalog(path) -> tuple[dict, int]:
    with open(path, encoding="utf-8") as fh:
        return parse_catalog(fh)


def build_sequences(records: Sequence[RawInteraction], max_len: int = DEFAULT_MAX_SEQ_LEN,
                    item_map: dict | None = None, user_map: dict | None = None):
    """Group records per user, order chronologically, keep the newest ``max_len``.

    Returns ``(sequences, user_map, item_map)``. Users with fewer than three
    interactions are dropped. Timestamp ties keep input order (stable sort).
    """
    if max_len < MIN_SEQ_LEN:
        raise ValueError(f"max_len must be >= {MIN_SEQ_LEN}")
    per_user: dict[str, list[RawInteraction]] = defaultdict(list)
    for rec in records:
        per_user[rec.user_key].append(rec)

    kept = {}
    for ukey, recs in per_user.items():
        if len(recs) < MIN_SEQ_LEN:
            continue
        recs = sorted(recs, key=lambda r: r.timestamp)[-max_len:]
        kept[ukey] = recs

    if user_map is None:
        user_map = remap_ids(kept)
    if item_map is None:
        item_map = remap_ids(r.item_key for recs in kept.values() for r in recs)

    sequences = []
    for ukey, recs in kept.items():
        sequences.append(InteractionSequence(
            user_map[ukey],
            tuple(item_map[r.item_key] for r in recs),
            tuple(r.timestamp for r in recs),
        ))
    sequences.sort(key=lambda s: s.user)
    return sequences, user_map, item_map


def load_raw_dataset(interactions_path, catalog_path, max_len: int = DEFAULT_MAX_SEQ_LEN) -> SplitDataset:
    """Ingest raw files into a split dataset.

    Interactions whose item has no usable title are discarded before
    sequences are built, so every kept item has a catalog row.
    """
    parsed = read_interactions(interactions_path)
    titles, _ = read_catalog(catalog_path)
    records = [r for r in parsed.records if r.item_key in titles]
    if len(records) < len(parsed.records):
        log.info("dropped %d interactions with untitled items", len(parsed.records) - len(records))
    if not records:
        raise ValueError("no usable interactions")
    sequences, user_map, item_map = build_sequences(records, max_len)
    if not sequences:
        raise ValueError(f"no user has at least {MIN_SEQ_LEN} interactions")
    item_keys = [None] * len(item_map)
    for k, i in item_map.items():
        item_keys[i] = k
    user_keys = [None] * len(user_map)
    for k, i in user_map.items():
        user_keys[i] = k
    catalog = Catalog(tuple(titles[k] for k in item_keys), tuple(item_keys))
    return SplitDataset(catalog, tuple(split_leave_two(sequences)), tuple(user_keys))


def dataset_stats(ds: SplitDataset) -> dict:
    n_inter = sum(len(u.full) for u in ds.users)
    n_users, n_items = ds.num_users, ds.num_items
    return {
        "users": n_users,
        "items": n_items,
        "interactions": n_inter,
        "avg_length": n_inter / n_users if n_users else 0.0,
        "density": n_inter / (n_users * n_items) if n_users else 0.0,
    }


def synth_markov(num_users: int, num_items: int, transition_sharpness: float, seed: int,
                 num_groups: int = 5, min_len: int = 5, max_len: int = 15,
                 popularity_skew: float = 0.0, shared_words: int = 0):
    """Sample sequences from a group-biased first-order Markov chain.

    Items are split into ``num_groups`` contiguous id ranges.
    From item ``i`` the next item ``j`` is drawn with probability proportional
    to ``w_j * exp(sharpness * [group(i) == group(j)])``, where ``w`` is flat
    unless ``popularity_skew`` > 0 (Zipf weights over a random item order).

    Titles read ``"group-g item-k"``; ``shared_words`` > 0 prepends the same
    filler words to every title, which makes stub embeddings of the whole
    catalog mutually similar the way real title encoders are.

    Returns ``(catalog, sequences)``.
    """
    if num_items < 10:
        raise ValueError("num_items must be >= 10")
    if not 1 <= num_groups <= num_items:
        raise ValueError("num_groups must be in [1, num_items]")
    if not MIN_SEQ_LEN <= min_len <= max_len:
        raise ValueError("need 3 <= min_len <= max_len")
    rng = np.random.default_rng(seed)
    groups = group_of(num_items, num_groups)

    weights = np.ones(num_items)
    if popularity_skew > 0:
        weights = (1.0 / np.arange(1, num_items + 1) ** popularity_skew)[rng.permutation(num_items)]
    same = groups[:, None] == groups[None, :]
    trans = weights[None, :] * np.exp(transition_sharpness * same)
    trans /= trans.sum(axis=1, keepdims=True)
    cdf = np.cumsum(trans, axis=1)
    start = np.cumsum(weights / weights.sum())

    filler = " ".join(f"common-{w}" for w in range(shared_words))
    titles = tuple(
        (filler + " " if filler else "") + f"group-{groups[k]} item-{k}" for k in range(num_items)
    )
    catalog = Catalog(titles, tuple(str(k) for k in range(num_items)))

    sequences = []
    for u in range(num_users):
        length = int(rng.integers(min_len, max_len + 1))
        cur = _draw(start, rng)
        items = [cur]
        for _ in range(length - 1):
            cur = _draw(cdf[cur], rng)
            items.append(cur)
        sequences.append(InteractionSequence(u, tuple(items), tuple(range(length))))
    return catalog, sequences


def group_of(num_items: int, num_groups: int) -> np.ndarray:
    return (np.arange(num_items) * num_groups) // num_items


def _draw(cdf: np.ndarray, rng: np.random.Generator) -> int:
    return min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(cdf) - 1)


def synth_dataset(num_users: int, num_items: int, transition_sharpness: float, seed: int,
                  **kwargs) -> SplitDataset:
    catalog, sequences = synth_markov(num_users, num_items, transition_sharpness, seed, **kwargs)
    return SplitDataset(catalog, tuple(split_leave_two(sequences)),
                        tuple(str(s.user) for s in sequences))


# Canonical dataset bundle: a directory with catalog.jsonl and sequences.jsonl.

def write_bundle(ds: SplitDataset, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    keys = ds.catalog.keys or tuple(str(i) for i in range(ds.num_items))
    with open(out / "catalog.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for i, (k, t) in enumerate(zip(keys, ds.catalog.titles)):
            fh.write(json.dumps({"item": i, "key": k, "title": t}, ensure_ascii=False) + "\n")
    ukeys = ds.user_keys or tuple(str(u.user) for u in ds.users)
    with open(out / "sequences.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for u, k in zip(ds.users, ukeys):
            fh.write(json.dumps({"user": u.user, "key": k, "items": list(u.full)}) + "\n")
    with open(out / "stats.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(dataset_stats(ds), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def read_bundle(path) -> SplitDataset:
    path = Path(path)
    rows = [json.loads(line) for line in open(path / "catalog.jsonl", encoding="utf-8") if line.strip()]
    rows.sort(key=lambda r: r["item"])
    if [r["item"] for r in rows] != list(range(len(rows))):
        raise ValueError("catalog item ids must be dense and 0-based")
    catalog = Catalog(tuple(r["title"] for r in rows), tuple(str(r["key"]) for r in rows))
    seqs, ukeys = [], []
    for line in open(path / "sequences.jsonl", encoding="utf-8"):
        if not line.strip():
            continue
        r = json.loads(line)
        seqs.append(InteractionSequence(int(r["user"]), tuple(int(i) for i in r["items"])))
        ukeys.append(str(r.get("key", r["user"])))
    ds = SplitDataset(catalog, tuple(split_leave_two(seqs)), tuple(ukeys))
    ds.check()
    return ds
