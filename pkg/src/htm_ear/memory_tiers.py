"""Two-tier bounded memory with batch eviction and an essential-loss ledger.

New facts always land in L1. When L1 is full a batch of its lowest-keyed
items is moved to L2; when L2 is full on receipt, a batch of *its*
lowest-keyed items is deleted for good and recorded in the ledger. The
``oracle_unbounded`` mode bypasses all of this with a single flat tier.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional

import numpy as np

from .ann_index import SearchHit, make_index
from .embedding import DEFAULT_DIM, EmbeddingProvider, HashingEmbedder
from .errors import DuplicateFact, NotAtCapacity, UnknownId

MODES = ("full", "oracle_unbounded", "no_ce", "no_gate", "lru")


class Residency(str, enum.Enum):
    L1 = "L1"
    L2 = "L2"
    FLAT = "flat"
    DELETED = "deleted"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Fact:
    id: str
    text: str
    entities: frozenset[str]
    importance: float
    seq: int
    source: str = "synthetic"

    def __post_init__(self) -> None:
        if not 0.0 <= self.importance <= 1.0:
            raise ValueError(f"importance {self.importance} outside [0, 1]")


@dataclass
class MemoryItem:
    fact: Fact
    embedding: np.ndarray
    usage: int = 0
    last_access: int = -1
    tier: str = "L1"

    def __post_init__(self) -> None:
        if self.last_access < 0:
            self.last_access = self.fact.seq

    @property
    def id(self) -> str:
        return self.fact.id


@dataclass
class SystemConfig:
    """Every tunable of the memory system; defaults are the saturation setup."""

    mode: str = "full"
    l1_capacity: int = 500
    l2_capacity: int = 5000
    alpha: float = 0.75
    beta: float = 0.25
    lam: float = 0.8
    gamma: float = 0.1
    sim_threshold: float = 0.84
    essential_threshold: float = 0.85
    k1: int = 100
    k2: int = 200
    rerank_top: int = 20
    final_k: int = 10
    evict_fraction: float = 0.15
    seed: int = 42
    dim: int = DEFAULT_DIM
    index: str = "hnsw"
    hnsw_m: int = 16
    ef_construction: int = 200
    ef_search: int = 100

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not math.isclose(self.alpha + self.beta, 1.0, abs_tol=1e-9):
            raise ValueError("alpha + beta must equal 1")
        for name in ("sim_threshold", "essential_threshold", "evict_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.evict_fraction == 0.0:
            raise ValueError("evict_fraction must be positive")
        for name in ("l1_capacity", "l2_capacity", "k1", "k2", "rerank_top", "final_k", "dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def policy(self) -> str:
        return "lru" if self.mode == "lru" else "importance"

    @property
    def bounded(self) -> bool:
        return self.mode != "oracle_unbounded"


def eviction_score(item: MemoryItem, cfg: SystemConfig) -> float:
    """Importance-weighted retention score; the lowest scores leave first."""
    return cfg.alpha * item.fact.importance + cfg.beta * min(item.usage / 10.0, 1.0)


def batch_size(capacity: int, fraction: float) -> int:
    # round before ceil so 0.15 * 500 does not become 76 through float noise
    return max(1, math.ceil(round(capacity * fraction, 9)))


class Tier:
    """One capacity-bounded tier: an ANN index plus the items it holds."""

    def __init__(self, name: str, capacity: Optional[int], index, policy: str = "importance") -> None:
        if policy not in ("importance", "lru"):
            raise ValueError(f"unknown eviction policy {policy!r}")
        self.name = name
        self.capacity = capacity
        self.policy = policy
        self.index = index
        self.items: dict[str, MemoryItem] = {}

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, fact_id: str) -> bool:
        return fact_id in self.items

    def __iter__(self) -> Iterator[MemoryItem]:
        return iter(self.items.values())

    @property
    def is_full(self) -> bool:
        return self.capacity is not None and len(self.items) >= self.capacity

    def add(self, item: MemoryItem) -> None:
        item.tier = self.name
        self.index.insert(item.id, item.embedding)
        self.items[item.id] = item

    def discard(self, fact_id: str) -> MemoryItem:
        item = self.items.pop(fact_id)
        self.index.remove(fact_id)
        return item

    def search(self, query: np.ndarray, k: int) -> list[SearchHit]:
        return self.index.search(query, k)

    def policy_key(self, item: MemoryItem, cfg: SystemConfig) -> tuple:
        if self.policy == "lru":
            return (item.last_access, item.fact.seq)
        return (eviction_score(item, cfg), item.fact.seq)

    def evict_batch(self, cfg: SystemConfig) -> list[MemoryItem]:
        """Remove the ``ceil(fraction * capacity)`` lowest-keyed items.

        Returned in eviction order (lowest key first).
        """
        if not self.is_full:
            raise NotAtCapacity(f"{self.name} holds {len(self.items)}/{self.capacity}")
        n = batch_size(self.capacity, cfg.evict_fraction)
        victims = sorted(self.items.values(), key=lambda it: self.policy_key(it, cfg))[:n]
        return [self.discard(it.id) for it in victims]


@dataclass
class LossLedger:
    """Running account of permanently deleted items.

    Only ids, importance and provenance are retained, never the payload.
    """

    essential_threshold: float = 0.85
    pruned_total: int = 0
    essential_lost: int = 0
    deleted: dict[str, tuple[float, str, int]] = field(default_factory=dict)

    def record(self, item: MemoryItem, evicted_from: str, at_seq: int) -> None:
        self.deleted[item.id] = (item.fact.importance, evicted_from, at_seq)
        self.pruned_total += 1
        if item.fact.importance >= self.essential_threshold:
            self.essential_lost += 1

    @property
    def deleted_ids(self) -> set[str]:
        return set(self.deleted)

    def export_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["fact_id", "importance", "evicted_from", "deleted_at_seq"])
            for fid, (imp, tier, seq) in self.deleted.items():
                w.writerow([fid, f"{imp:.6f}", tier, seq])


class TieredMemory:
    """The L1/L2 hierarchy (or a single flat tier in oracle mode).

    ``index_factory(name, dim, seed)`` may be supplied to swap the ANN
    backend, e.g. ``FlatIndex`` for exhaustive-scan tests.
    """

    def __init__(
        self,
        cfg: SystemConfig,
        embedder: Optional[EmbeddingProvider] = None,
        index_factory: Optional[Callable[[str, int, int], object]] = None,
    ) -> None:
        self.cfg = cfg
        self.embedder = embedder if embedder is not None else HashingEmbedder(cfg.dim)
        if self.embedder.dim != cfg.dim:
            raise ValueError(f"embedder dim {self.embedder.dim} != config dim {cfg.dim}")
        if index_factory is None:
            index_factory = self._default_index
        self.ledger = LossLedger(cfg.essential_threshold)
        self.ingested = 0
        self._seen: set[str] = set()
        if cfg.bounded:
            self.l1 = Tier("L1", cfg.l1_capacity, index_factory("L1", cfg.dim, cfg.seed * 2), cfg.policy)
            self.l2 = Tier("L2", cfg.l2_capacity, index_factory("L2", cfg.dim, cfg.seed * 2 + 1), cfg.policy)
            self.flat = None
        else:
            self.l1 = self.l2 = None
            self.flat = Tier("flat", None, index_factory("flat", cfg.dim, cfg.seed * 2))

    def _default_index(self, name: str, dim: int, seed: int):
        return make_index(
            self.cfg.index, dim, seed=seed,
            **({} if self.cfg.index == "flat" else dict(
                m=self.cfg.hnsw_m,
                ef_construction=self.cfg.ef_construction,
                ef_search=self.cfg.ef_search,
            )),
        )

    @property
    def tiers(self) -> list[Tier]:
        return [self.flat] if self.flat is not None else [self.l1, self.l2]

    def live_count(self) -> int:
        return sum(len(t) for t in self.tiers)

    def insert_fact(self, fact: Fact, embedding: Optional[np.ndarray] = None) -> None:
        if fact.id in self._seen:
            raise DuplicateFact(fact.id)
        if embedding is None:
            embedding = self.embedder.embed(fact.text, fact.id)
        item = MemoryItem(fact, embedding)
        if self.flat is not None:
            self.flat.add(item)
        else:
            if self.l1.is_full:
                for evictee in self.l1.evict_batch(self.cfg):
                    self._demote(evictee, fact.seq)
            self.l1.add(item)
        self._seen.add(fact.id)
        self.ingested += 1

    def _demote(self, item: MemoryItem, at_seq: int) -> None:
        if self.l2.is_full:
            for gone in self.l2.evict_batch(self.cfg):
                self.ledger.record(gone, "L2", at_seq)
        self.l2.add(item)

    def get(self, fact_id: str) -> Optional[MemoryItem]:
        for tier in self.tiers:
            item = tier.items.get(fact_id)
            if item is not None:
                return item
        return None

    def touch(self, fact_id: str, access_seq: int) -> None:
        item = self.get(fact_id)
        if item is None:
            if fact_id in self.ledger.deleted:
                return
            raise UnknownId(fact_id)
        item.usage += 1
        item.last_access = access_seq

    def residency(self, fact_id: str) -> Residency:
        for tier in self.tiers:
            if fact_id in tier:
                return Residency(tier.name)
        if fact_id in self.ledger.deleted:
            return Residency.DELETED
        return Residency.UNKNOWN

    def check_invariants(self) -> None:
        """Assert conservation and capacity; cheap enough for property tests."""
        assert self.ingested == self.live_count() + self.ledger.pruned_total
        assert self.ledger.essential_lost <= self.ledger.pruned_total
        for tier in self.tiers:
            if tier.capacity is not None:
                assert len(tier) <= tier.capacity
            assert tier.index.live_count() == len(tier)

