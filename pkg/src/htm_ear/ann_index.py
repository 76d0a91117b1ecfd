"""Approximate nearest-neighbour indexes over unit vectors.

:class:`HNSWIndex` is a hierarchical navigable small-world graph with
tombstone deletion and threshold rebuild. :class:`FlatIndex` has the same
surface but scans every live entry; it serves as the exhaustive-search hook
for tests and tiny collections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Iterator, Optional

import numpy as np

from . import _hnsw_kernels as _k
from .errors import DimensionMismatch, DuplicateId, UnknownId

MAX_LEVEL = 12


@dataclass(frozen=True)
class SearchHit:
    id: Hashable
    sim: float


def _order_by_seq(ids, sims, seq_of_slot):
    """Stable re-sort of ``(slot, sim)`` pairs: sim descending, then insertion order."""
    seqs = np.fromiter((seq_of_slot[i] for i in ids), dtype=np.int64, count=len(ids))
    order = np.lexsort((seqs, -sims))
    return ids[order], sims[order]


class HNSWIndex:
    """HNSW graph with inner-product similarity.

    Parameters follow the usual defaults: ``m`` links per node on upper
    layers, ``2 * m`` on the base layer, level multiplier ``1 / ln(m)``.
    Removal tombstones an entry; once tombstones exceed ``rebuild_ratio`` of
    all stored entries the graph is rebuilt from the live ones, keeping each
    entry's level and relative insertion order.
    """

    def __init__(
        self,
        dim: int,
        m: int = 16,
        ef_construction: int = 200,
        ef_search: int = 100,
        seed: int = 0,
        rebuild_ratio: float = 0.5,
        initial_capacity: int = 256,
    ) -> None:
        self.dim = dim
        self.m = m
        self.m0 = 2 * m
        self.ef_construction = ef_construction
        self.ef_search = ef_search
        self.rebuild_ratio = rebuild_ratio
        self.level_mult = 1.0 / math.log(m)
        self._rng = np.random.default_rng(seed)
        self.rebuild_count = 0
        self._alloc(max(initial_capacity, 1))
        self._reset_graph()
        # id -> (insertion sequence, level); survives rebuilds
        self._meta: dict[Hashable, tuple[int, int]] = {}
        self._next_seq = 0

    def _alloc(self, cap: int) -> None:
        self._vecs = np.zeros((cap, self.dim), dtype=np.float64)
        self._links = np.zeros((cap, MAX_LEVEL + 1, self.m0), dtype=np.int64)
        self._nlinks = np.zeros((cap, MAX_LEVEL + 1), dtype=np.int64)
        self._dead = np.zeros(cap, dtype=np.bool_)
        self._visited = np.zeros(cap, dtype=np.int64)
        self._tag = np.zeros(1, dtype=np.int64)

    def _grow(self) -> None:
        old = self._vecs.shape[0]
        vecs, links, nlinks, dead = self._vecs, self._links, self._nlinks, self._dead
        self._alloc(old * 2)
        self._vecs[:old] = vecs
        self._links[:old] = links
        self._nlinks[:old] = nlinks
        self._dead[:old] = dead

    def _reset_graph(self) -> None:
        self._n = 0
        self._slot_ids: list[Hashable] = []
        self._slot_seq: list[int] = []
        self._slot_level: list[int] = []
        self._slot_of: dict[Hashable, int] = {}
        self._n_dead = 0
        self._entry = -1
        self._max_level = -1
        self._nlinks[:] = 0
        self._dead[:] = False

    # -- public surface -------------------------------------------------

    def __len__(self) -> int:
        return self.live_count()

    def __contains__(self, id_: Hashable) -> bool:
        return id_ in self._slot_of

    def __iter__(self) -> Iterator[Hashable]:
        return iter(list(self._slot_of))

    def live_count(self) -> int:
        return len(self._slot_of)

    @property
    def dead_count(self) -> int:
        return self._n_dead

    def vector(self, id_: Hashable) -> np.ndarray:
        try:
            return self._vecs[self._slot_of[id_]].copy()
        except KeyError:
            raise UnknownId(id_) from None

    def insert(self, id_: Hashable, vector: np.ndarray) -> None:
        if id_ in self._slot_of:
            raise DuplicateId(id_)
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.dim,):
            raise DimensionMismatch(f"expected ({self.dim},), got {vector.shape}")
        level = min(int(-math.log(1.0 - self._rng.random()) * self.level_mult), MAX_LEVEL)
        self._meta[id_] = (self._next_seq, level)
        self._next_seq += 1
        self._place(id_, vector, level)

    def remove(self, id_: Hashable) -> None:
        slot = self._slot_of.pop(id_, None)
        if slot is None:
            raise UnknownId(id_)
        del self._meta[id_]
        self._dead[slot] = True
        self._n_dead += 1
        if self._n_dead > self.rebuild_ratio * self._n:
            self.rebuild()
        elif slot == self._entry:
            self._promote_entry()

    def search(self, query: np.ndarray, k: int) -> list[SearchHit]:
        """Top-``k`` live entries by inner product, ``sim`` descending.

        Equal similarities are ordered by insertion sequence (older first).
        """
        ids, sims = self.search_raw(query, k)
        return [SearchHit(i, s) for i, s in zip(ids, sims)]

    def search_raw(self, query: np.ndarray, k: int) -> tuple[list[Hashable], list[float]]:
        """Like :meth:`search` but returns parallel ``(ids, sims)`` lists."""
        if k <= 0:
            raise ValueError("k must be positive")
        live = self.live_count()
        if live == 0:
            return [], []
        query = np.asarray(query, dtype=np.float64)
        if query.shape != (self.dim,):
            raise DimensionMismatch(f"expected ({self.dim},), got {query.shape}")
        if k >= live:
            # the contract is "every live entry", which only a scan guarantees
            slots = np.fromiter(self._slot_of.values(), dtype=np.int64, count=live)
            slots, sims = _order_by_seq(slots, self._vecs[slots] @ query, self._slot_seq)
        else:
            # kernel output is already (sim desc, slot asc) and slot order
            # follows insertion order, including after a rebuild
            slots, sims = _k.knn(
                query, k, max(k, self.ef_search), self._entry, self._max_level,
                self._vecs, self._links, self._nlinks, self._dead, self._visited, self._tag,
            )
        slot_ids = self._slot_ids
        return [slot_ids[i] for i in slots[:k].tolist()], sims[:k].tolist()

    def rebuild(self) -> None:
        """Re-insert all live entries into a fresh graph (levels kept)."""
        live = sorted(self._slot_of.items(), key=lambda kv: self._slot_seq[kv[1]])
        vectors = [(id_, self._vecs[slot].copy()) for id_, slot in live]
        self._reset_graph()
        for id_, vec in vectors:
            self._place(id_, vec, self._meta[id_][1])
        self.rebuild_count += 1

    # -- internals ------------------------------------------------------

    def _place(self, id_: Hashable, vector: np.ndarray, level: int) -> None:
        if self._n >= self._vecs.shape[0]:
            self._grow()
        slot = self._n
        self._n += 1
        self._vecs[slot] = vector
        self._nlinks[slot] = 0
        self._dead[slot] = False
        self._slot_ids.append(id_)
        self._slot_seq.append(self._meta[id_][0])
        self._slot_level.append(level)
        self._slot_of[id_] = slot
        if self._entry < 0:
            self._entry = slot
            self._max_level = level
            return
        _k.insert_node(
            slot, level, self._entry, self._max_level, self.m, self.m0, self.ef_construction,
            self._vecs, self._links, self._nlinks, self._dead, self._visited, self._tag,
        )
        if level > self._max_level:
            self._entry = slot
            self._max_level = level

    def _promote_entry(self) -> None:
        best = -1
        for slot in self._slot_of.values():
            if best < 0 or self._slot_level[slot] > self._slot_level[best] or (
                self._slot_level[slot] == self._slot_level[best] and slot < best
            ):
                best = slot
        if best < 0:
            return
        self._entry = best
        self._max_level = self._slot_level[best]


class FlatIndex:
    """Exhaustive inner-product index with the same surface as HNSWIndex."""

    def __init__(self, dim: int, **_: object) -> None:
        self.dim = dim
        self.rebuild_count = 0
        self._vecs: dict[Hashable, np.ndarray] = {}
        self._seq: dict[Hashable, int] = {}
        self._next_seq = 0

    def __len__(self) -> int:
        return len(self._vecs)

    def __contains__(self, id_: Hashable) -> bool:
        return id_ in self._vecs

    def __iter__(self) -> Iterator[Hashable]:
        return iter(list(self._vecs))

    def live_count(self) -> int:
        return len(self._vecs)

    dead_count = 0

    def vector(self, id_: Hashable) -> np.ndarray:
        try:
            return self._vecs[id_].copy()
        except KeyError:
            raise UnknownId(id_) from None

    def insert(self, id_: Hashable, vector: np.ndarray) -> None:
        if id_ in self._vecs:
            raise DuplicateId(id_)
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.dim,):
            raise DimensionMismatch(f"expected ({self.dim},), got {vector.shape}")
        self._vecs[id_] = vector
        self._seq[id_] = self._next_seq
        self._next_seq += 1

    def remove(self, id_: Hashable) -> None:
        if self._vecs.pop(id_, None) is None:
            raise UnknownId(id_)
        del self._seq[id_]

    def search(self, query: np.ndarray, k: int) -> list[SearchHit]:
        ids, sims = self.search_raw(query, k)
        return [SearchHit(i, s) for i, s in zip(ids, sims)]

    def search_raw(self, query: np.ndarray, k: int) -> tuple[list[Hashable], list[float]]:
        if k <= 0:
            raise ValueError("k must be positive")
        if not self._vecs:
            return [], []
        ids = list(self._vecs)
        sims = np.stack([self._vecs[i] for i in ids]) @ np.asarray(query, dtype=np.float64)
        seqs = np.array([self._seq[i] for i in ids], dtype=np.int64)
        order = np.lexsort((seqs, -sims))[:k]
        return [ids[i] for i in order], sims[order].tolist()


def make_index(kind: str, dim: int, seed: int = 0, **kwargs) -> HNSWIndex | FlatIndex:
    if kind == "hnsw":
        return HNSWIndex(dim, seed=seed, **kwargs)
    if kind == "flat":
        return FlatIndex(dim)
    raise ValueError(f"unknown index kind {kind!r}")
