"""Identifiers, catalogs, interaction sequences and leave-two-out splits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

DEFAULT_MAX_SEQ_LEN = 50


@dataclass(frozen=True)
class Catalog:
    """Item universe; ``titles[i]`` is the text of item ``i``."""

    titles: tuple[str, ...]
    keys: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.titles) < 1:
            raise ValueError("catalog must contain at least one item")
        if any(not t.strip() for t in self.titles):
            raise ValueError("catalog titles must be non-empty")
        if self.keys and len(self.keys) != len(self.titles):
            raise ValueError("keys and titles differ in length")

    @property
    def size(self) -> int:
        return len(self.titles)

    def __len__(self) -> int:
        return len(self.titles)


@dataclass(frozen=True)
class InteractionSequence:
    user: int
    items: tuple[int, ...]
    timestamps: tuple[int, ...] | None = None

    def __post_init__(self):
        if len(self.items) < 1:
            raise ValueError("interaction sequence must be non-empty")
        if self.timestamps is not None:
            if len(self.timestamps) != len(self.items):
                raise ValueError("timestamps and items differ in length")
            if any(b < a for a, b in zip(self.timestamps, self.timestamps[1:])):
                raise ValueError("timestamps must be non-decreasing")

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class UserSplit:
    user: int
    train: tuple[int, ...]
    valid_target: int
    test_target: int

    @property
    def full(self) -> tuple[int, ...]:
        return self.train + (self.valid_target, self.test_target)


@dataclass(frozen=True)
class SplitDataset:
    catalog: Catalog
    users: tuple[UserSplit, ...]
    user_keys: tuple[str, ...] = field(default=(), compare=False)

    @property
    def num_items(self) -> int:
        return self.catalog.size

    @property
    def num_users(self) -> int:
        return len(self.users)

    def check(self) -> None:
        n = self.catalog.size
        for u in self.users:
            if any(not 0 <= v < n for v in u.full):
                raise ValueError(f"user {u.user} references an item outside the catalog")


def remap_ids(keys: Iterable[Hashable]) -> dict:
    """Dense 0-based ids in order of first appearance."""
    mapping: dict = {}
    for k in keys:
        if k not in mapping:
            mapping[k] = len(mapping)
    return mapping


def invert(mapping: dict) -> list:
    inv = [None] * len(mapping)
    for k, i in mapping.items():
        inv[i] = k
    return inv


def split_leave_two(sequences: Sequence[InteractionSequence]) -> list[UserSplit]:
    """Hold out the last item for test and the one before it for validation."""
    out = []
    for seq in sequences:
        if len(seq.items) < 3:
            raise ValueError(f"user {seq.user}: sequence of length {len(seq.items)} cannot be split")
        out.append(UserSplit(seq.user, tuple(seq.items[:-2]), seq.items[-2], seq.items[-1]))
    return out
