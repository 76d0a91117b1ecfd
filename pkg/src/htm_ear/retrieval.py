"""Query pipeline: encode, gate-route across tiers, score, re-rank.

Candidate score is ``sim**3 + lam * overlap + gamma * importance`` where
``overlap`` counts entities shared by query and fact. The gate keeps a query
in L1 only when the top L1 hit is similar enough *and* covers every query
entity; otherwise L2 is searched too.
"""

from __future__ import annotations

import enum
import time
from functools import lru_cache
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Protocol

import numpy as np

from .ann_index import SearchHit
from .embedding import tokenize
from .errors import FileUnreadable
from .memory_tiers import Fact, MemoryItem, SystemConfig, TieredMemory


class Cohort(str, enum.Enum):
    ACTIVE = "active"
    HISTORY = "history"
    OTHER = "other"


class Route(str, enum.Enum):
    L1_ONLY = "l1_only"
    L1_PLUS_L2 = "l1_plus_l2"
    FLAT = "flat"


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    entities: frozenset[str]
    gold_id: str
    cohort: Cohort = Cohort.OTHER


@dataclass
class RetrievalResult:
    ranked: list[tuple[str, float]]
    route: Route
    latency_ms: float
    gate_sim: float = float("nan")
    gate_covered: bool = False

    @property
    def ids(self) -> list[str]:
        return [fid for fid, _ in self.ranked]


def assign_cohort(seq: int, n_total: int, window: int = 100) -> Cohort:
    """Last ``window`` facts are active; first ``window`` are history.

    When the stream is shorter than ``2 * window`` the active cohort wins the
    overlap.
    """
    if seq >= n_total - window:
        return Cohort.ACTIVE
    if seq < window:
        return Cohort.HISTORY
    return Cohort.OTHER


# -- scoring primitives --------------------------------------------------


def score_candidate(sim: float, overlap: int, importance: float, cfg: SystemConfig) -> float:
    return sim * sim * sim + cfg.lam * overlap + cfg.gamma * importance


def score_candidates(sims: np.ndarray, overlap: np.ndarray, importance: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Vectorised :func:`score_candidate` (same operation order, same rounding)."""
    return sims * sims * sims + cfg.lam * overlap + cfg.gamma * importance


def gate_check(
    query: Query, l1_hits: list[SearchHit], entities_of: Callable[[str], frozenset[str]], cfg: SystemConfig
) -> tuple[bool, float, bool]:
    """Return ``(passed, top1_sim, covered)`` for the L1 sufficiency test."""
    if not l1_hits:
        return False, float("nan"), False
    top = l1_hits[0]
    covered = query.entities <= entities_of(top.id)
    return (top.sim >= cfg.sim_threshold and covered), top.sim, covered


def gate(
    query: Query, l1_hits: list[SearchHit], entities_of: Callable[[str], frozenset[str]], cfg: SystemConfig
) -> bool:
    return gate_check(query, l1_hits, entities_of, cfg)[0]


# -- re-ranking ------------------------------------------------------------


class Reranker(Protocol):
    def __call__(self, query: Query, fact: Fact) -> float:
        ...


@lru_cache(maxsize=1 << 16)
def _token_set(text: str) -> frozenset[str]:
    return frozenset(tokenize(text))


def lexical_score(query: Query, fact: Fact) -> float:
    """Token Jaccard of the two texts plus 1.0 per query entity present in the fact."""
    q_tokens = _token_set(query.text)
    f_tokens = _token_set(fact.text)
    union = q_tokens | f_tokens
    jaccard = len(q_tokens & f_tokens) / len(union) if union else 0.0
    bonus = sum(1.0 for e in query.entities if e in fact.entities or e in f_tokens)
    return jaccard + bonus


class ScoreFileReranker:
    """Replays externally computed re-ranker scores.

    File lines are ``<query_id>\\t<fact_id>\\t<score>``; pairs absent from the
    file are scored by ``fallback``.
    """

    def __init__(self, scores: dict[tuple[str, str], float], fallback: Reranker = lexical_score) -> None:
        self.scores = scores
        self.fallback = fallback

    @classmethod
    def load(cls, path: str | Path, fallback: Reranker = lexical_score) -> "ScoreFileReranker":
        scores: dict[tuple[str, str], float] = {}
        try:
            fh = open(path, encoding="utf-8")
        except OSError as exc:
            raise FileUnreadable(str(exc)) from exc
        with fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
                scores[(parts[0], parts[1])] = float(parts[2])
        return cls(scores, fallback)

    def __call__(self, query: Query, fact: Fact) -> float:
        hit = self.scores.get((query.id, fact.id))
        return hit if hit is not None else self.fallback(query, fact)


def rerank(
    query: Query,
    candidates: list[tuple[MemoryItem, float]],
    cfg: SystemConfig,
    scorer: Reranker = lexical_score,
) -> list[tuple[MemoryItem, float]]:
    """Reorder ``(item, pipeline_score)`` pairs by ``scorer``.

    Output pairs carry the re-ranker score. Ties keep the incoming order; in
    ``no_ce`` mode the input is returned untouched.
    """
    if len(candidates) > cfg.rerank_top:
        raise ValueError(f"{len(candidates)} candidates exceed rerank_top={cfg.rerank_top}")
    if cfg.mode == "no_ce":
        return list(candidates)
    rescored = [(item, float(scorer(query, item.fact))) for item, _ in candidates]
    # sorted() is stable, so equal scores keep pipeline order
    return sorted(rescored, key=lambda p: -p[1])


# -- the pipeline ------------------------------------------------------------


@dataclass
class RouteStats:
    queries: int = 0
    gate_decisions: int = 0
    l2_searches: int = 0

    @property
    def l2_fallback_rate(self) -> float:
        return self.l2_searches / self.gate_decisions if self.gate_decisions else 0.0


@dataclass
class Retriever:
    """Stateful query front-end bound to one :class:`TieredMemory`.

    ``clock`` supplies access sequence numbers for ``touch``; it starts after
    the last ingested fact.
    """

    memory: TieredMemory
    scorer: Reranker = lexical_score
    stats: RouteStats = field(default_factory=RouteStats)
    clock: Optional[int] = None

    @staticmethod
    def _score(query: Query, items: list[MemoryItem], sims: np.ndarray, cfg: SystemConfig):
        """Score candidates and keep the best ``rerank_top`` (ties: older first)."""
        if len({it.id for it in items}) != len(items):
            raise AssertionError("an item is resident in two tiers")
        n = len(items)
        importance = np.fromiter((it.fact.importance for it in items), dtype=np.float64, count=n)
        seqs = np.fromiter((it.fact.seq for it in items), dtype=np.int64, count=n)
        if query.entities:
            qe = query.entities
            overlap = np.fromiter((len(qe & it.fact.entities) for it in items), dtype=np.float64, count=n)
        else:
            overlap = np.zeros(n)
        scores = score_candidates(sims, overlap, importance, cfg)
        top = np.lexsort((seqs, -scores))[: cfg.rerank_top]
        return [(items[i], float(scores[i])) for i in top]

    def retrieve(self, query: Query) -> RetrievalResult:
        cfg = self.memory.cfg
        mem = self.memory
        if self.clock is None:
            self.clock = mem.ingested
        t0 = time.perf_counter()
        self.stats.queries += 1

        if mem.live_count() == 0:
            route = Route.FLAT if mem.flat is not None else Route.L1_ONLY
            return RetrievalResult([], route, (time.perf_counter() - t0) * 1e3)

        qvec = mem.embedder.embed(query.text, query.id)
        gate_sim, covered = float("nan"), False
        # no_gate still records what the gate would have seen, but never acts on it
        if mem.flat is not None:
            route = Route.FLAT
            ids, sims = mem.flat.index.search_raw(qvec, cfg.k2)
            items = [mem.flat.items[i] for i in ids]
        else:
            ids, sims = mem.l1.index.search_raw(qvec, cfg.k1)
            items = [mem.l1.items[i] for i in ids]
            route = Route.L1_ONLY
            top = [SearchHit(ids[0], sims[0])] if ids else []
            passed, gate_sim, covered = gate_check(query, top, lambda _: items[0].fact.entities, cfg)
            if cfg.mode != "no_gate":
                self.stats.gate_decisions += 1
                if not passed:
                    self.stats.l2_searches += 1
                    route = Route.L1_PLUS_L2
                    ids2, sims2 = mem.l2.index.search_raw(qvec, cfg.k2)
                    items.extend(mem.l2.items[i] for i in ids2)
                    sims = sims + sims2

        scored = self._score(query, items, np.asarray(sims, dtype=np.float64), cfg)
        final = rerank(query, scored[: cfg.rerank_top], cfg, self.scorer)[: cfg.final_k]
        self.clock += 1
        for item, _ in final:
            mem.touch(item.id, self.clock)
        latency = (time.perf_counter() - t0) * 1e3
        return RetrievalResult(
            [(item.id, score) for item, score in final], route, latency, gate_sim, covered
        )


def retrieve(
    query: Query, memory: TieredMemory, cfg: Optional[SystemConfig] = None, scorer: Reranker = lexical_score
) -> RetrievalResult:
    """One-shot convenience wrapper; ``cfg`` must match ``memory.cfg`` if given."""
    if cfg is not None and cfg is not memory.cfg:
        raise ValueError("cfg does not belong to this memory")
    return Retriever(memory, scorer).retrieve(query)


def run_queries(retriever: Retriever, queries: Iterable[Query]) -> list[RetrievalResult]:
    return [retriever.retrieve(q) for q in queries]
