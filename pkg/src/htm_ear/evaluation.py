"""Experiment runner: one (mode, seed) run end to end, plus aggregation."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .embedding import EmbeddingProvider, HashingEmbedder
from .errors import EmptyCohort, MissingInput, MissingRun
from .memory_tiers import MODES, Fact, SystemConfig, TieredMemory
from .retrieval import Cohort, Query, Reranker, RetrievalResult, Retriever, lexical_score
from .workload import Scenario, generate_synthetic

log = logging.getLogger(__name__)

DEFAULT_SEEDS = (42, 43, 44, 45, 46)
FAILURE_ZONE_MRR = 0.6
RESULT_COLUMNS = (
    "mode", "seed", "mrr_active", "mrr_history", "latency_mean_ms", "latency_std_ms",
    "essential_lost", "pruned_total", "l2_fallback_rate",
)
AGG_METRICS = (
    "mrr_active", "mrr_history", "latency_mean_ms", "essential_lost", "pruned_total", "l2_fallback_rate",
)
BGL_COLUMNS = ("mode", "mrr", "latency_mean_ms", "essential_lost", "pruned_total", "n_facts", "n_queries")


@dataclass
class RunMetrics:
    mode: str
    seed: int
    mrr_active: float
    mrr_history: float
    latency_mean_ms: float
    latency_std_ms: float
    essential_lost: int
    pruned_total: int
    l2_fallback_rate: float
    # instrumentation, not part of the results file
    gate_decisions: int = 0
    l2_searches: int = 0
    n_queries: int = 0
    wall_s: float = 0.0


@dataclass(frozen=True)
class AggregateRow:
    mode: str
    metric: str
    mean: float
    std: float


@dataclass(frozen=True)
class ParetoPoint:
    mode: str
    latency_mean_ms: float
    mrr_active_mean: float

    @property
    def failure_zone(self) -> bool:
        return self.mrr_active_mean < FAILURE_ZONE_MRR


def reciprocal_rank(ranked_ids: Sequence[str], gold: str) -> float:
    for i, fid in enumerate(ranked_ids, 1):
        if fid == gold:
            return 1.0 / i
    return 0.0


def mrr(results: Sequence[RetrievalResult], golds: Sequence[str]) -> float:
    """Mean reciprocal rank of each gold id in its result list (0 when absent)."""
    if len(results) != len(golds):
        raise ValueError("results and golds are not aligned")
    if not results:
        raise EmptyCohort("no queries to score")
    return sum(reciprocal_rank(r.ids, g) for r, g in zip(results, golds)) / len(results)


@dataclass
class _Executed:
    results: list[RetrievalResult] = field(default_factory=list)
    queries: list[Query] = field(default_factory=list)

    def cohort(self, c: Cohort) -> tuple[list[RetrievalResult], list[str]]:
        pairs = [(r, q.gold_id) for r, q in zip(self.results, self.queries) if q.cohort is c]
        return [p[0] for p in pairs], [p[1] for p in pairs]


def ingest_and_query(
    cfg: SystemConfig,
    facts: Sequence[Fact],
    queries: Sequence[Query],
    embedder: Optional[EmbeddingProvider] = None,
    scorer: Reranker = lexical_score,
    index_factory=None,
) -> tuple[TieredMemory, Retriever, _Executed]:
    """Fresh memory, ingest every fact in seq order, then run every query once."""
    memory = TieredMemory(cfg, embedder, index_factory)
    for fact in sorted(facts, key=lambda f: f.seq):
        memory.insert_fact(fact)
    retriever = Retriever(memory, scorer)
    done = _Executed()
    for q in queries:
        done.results.append(retriever.retrieve(q))
        done.queries.append(q)
    return memory, retriever, done


def _latency(results: Sequence[RetrievalResult]) -> tuple[float, float]:
    if not results:
        return 0.0, 0.0
    lat = np.array([r.latency_ms for r in results])
    return float(lat.mean()), float(lat.std())


def run_scenario(
    cfg: SystemConfig,
    scn: Scenario,
    embedder: Optional[EmbeddingProvider] = None,
    scorer: Reranker = lexical_score,
    index_factory=None,
) -> RunMetrics:
    """Generate ``scn``'s stream, run it through a memory built from ``cfg``.

    The synthetic generator is seeded by ``scn.seed``; ``cfg.seed`` seeds the
    index level draws. Capacities come from ``scn``. Latency statistics are
    taken over the active cohort.
    """
    t0 = time.perf_counter()
    cfg = dataclasses.replace(cfg, l1_capacity=scn.l1_capacity, l2_capacity=scn.l2_capacity)
    facts, queries = generate_synthetic(scn)
    if embedder is None:
        embedder = HashingEmbedder(cfg.dim)
    memory, retriever, done = ingest_and_query(cfg, facts, queries, embedder, scorer, index_factory)

    active_r, active_g = done.cohort(Cohort.ACTIVE)
    hist_r, hist_g = done.cohort(Cohort.HISTORY)
    lat_mean, lat_std = _latency(active_r)
    stats = retriever.stats
    metrics = RunMetrics(
        mode=cfg.mode,
        seed=scn.seed,
        mrr_active=mrr(active_r, active_g),
        mrr_history=mrr(hist_r, hist_g) if hist_r else 0.0,
        latency_mean_ms=lat_mean,
        latency_std_ms=lat_std,
        essential_lost=memory.ledger.essential_lost,
        pruned_total=memory.ledger.pruned_total,
        l2_fallback_rate=stats.l2_fallback_rate,
        gate_decisions=stats.gate_decisions,
        l2_searches=stats.l2_searches,
        n_queries=stats.queries,
        wall_s=time.perf_counter() - t0,
    )
    log.info(
        "%s seed=%d active=%.3f history=%.3f lost=%d pruned=%d (%.1fs)",
        metrics.mode, metrics.seed, metrics.mrr_active, metrics.mrr_history,
        metrics.essential_lost, metrics.pruned_total, metrics.wall_s,
    )
    return metrics


@dataclass
class BglMetrics:
    mode: str
    mrr: float
    latency_mean_ms: float
    essential_lost: int
    pruned_total: int
    n_facts: int
    n_queries: int


def run_bgl(
    cfg: SystemConfig,
    facts: Sequence[Fact],
    queries: Sequence[Query],
    embedder: Optional[EmbeddingProvider] = None,
    scorer: Reranker = lexical_score,
) -> BglMetrics:
    """Log benchmark run: MRR over every generated query (no cohort split)."""
    memory, _, done = ingest_and_query(cfg, facts, queries, embedder, scorer)
    lat_mean, _ = _latency(done.results)
    return BglMetrics(
        mode=cfg.mode,
        mrr=mrr(done.results, [q.gold_id for q in done.queries]) if done.results else 0.0,
        latency_mean_ms=lat_mean,
        essential_lost=memory.ledger.essential_lost,
        pruned_total=memory.ledger.pruned_total,
        n_facts=len(facts),
        n_queries=len(queries),
    )


def aggregate(
    runs: Iterable[RunMetrics],
    seeds: Sequence[int] = DEFAULT_SEEDS,
    metrics: Sequence[str] = AGG_METRICS,
) -> list[AggregateRow]:
    """Per-mode mean and population std of each metric across ``seeds``."""
    by_mode: dict[str, dict[int, RunMetrics]] = {}
    for r in runs:
        by_mode.setdefault(r.mode, {})[r.seed] = r
    rows = []
    for mode in sorted(by_mode, key=_mode_order):
        per_seed = by_mode[mode]
        missing = [s for s in seeds if s not in per_seed]
        if missing:
            raise MissingRun(f"mode {mode} has no run for seed(s) {missing}")
        for metric in metrics:
            vals = np.array([getattr(per_seed[s], metric) for s in seeds], dtype=np.float64)
            rows.append(AggregateRow(mode, metric, float(vals.mean()), float(vals.std(ddof=0))))
    return rows


def _mode_order(mode: str) -> tuple[int, str]:
    return (MODES.index(mode) if mode in MODES else len(MODES), mode)


def aggregate_table(rows: Iterable[AggregateRow]) -> dict[str, dict[str, tuple[float, float]]]:
    table: dict[str, dict[str, tuple[float, float]]] = {}
    for r in rows:
        table.setdefault(r.mode, {})[r.metric] = (r.mean, r.std)
    return table


def pareto_points(rows: Iterable[AggregateRow]) -> list[ParetoPoint]:
    table = aggregate_table(rows)
    return [
        ParetoPoint(mode, m["latency_mean_ms"][0], m["mrr_active"][0])
        for mode, m in table.items()
        if "latency_mean_ms" in m and "mrr_active" in m
    ]


# -- files ------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def write_results(runs: Iterable[RunMetrics], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_COLUMNS)
        for r in runs:
            w.writerow([_fmt(getattr(r, c)) for c in RESULT_COLUMNS])


def append_result(run: RunMetrics, path: str | Path) -> None:
    """Append one row, writing the header first if the file is new or empty."""
    p = Path(path)
    fresh = not p.exists() or p.stat().st_size == 0
    with open(p, "a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if fresh:
            w.writerow(RESULT_COLUMNS)
        w.writerow([_fmt(getattr(run, c)) for c in RESULT_COLUMNS])


def read_results(path: str | Path) -> list[RunMetrics]:
    p = Path(path)
    if not p.is_file():
        raise MissingInput(f"results file not found: {p}")
    out = []
    with open(p, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(RunMetrics(
                mode=row["mode"],
                seed=int(row["seed"]),
                mrr_active=float(row["mrr_active"]),
                mrr_history=float(row["mrr_history"]),
                latency_mean_ms=float(row["latency_mean_ms"]),
                latency_std_ms=float(row["latency_std_ms"]),
                essential_lost=int(row["essential_lost"]),
                pruned_total=int(row["pruned_total"]),
                l2_fallback_rate=float(row["l2_fallback_rate"]),
            ))
    return out


def write_aggregate(rows: Iterable[AggregateRow], path: str | Path) -> None:
    """Wide layout, one line per mode: ``<metric>_mean,<metric>_std`` pairs."""
    table = aggregate_table(rows)
    metrics = [m for m in AGG_METRICS if any(m in v for v in table.values())]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["mode"] + [f"{m}_{s}" for m in metrics for s in ("mean", "std")])
        for mode, vals in table.items():
            w.writerow([mode] + [_fmt(x) for m in metrics for x in vals.get(m, (math.nan, math.nan))])


def write_pareto(points: Iterable[ParetoPoint], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "latency_mean_ms", "mrr_active_mean", "failure_zone"])
        for p in points:
            w.writerow([p.mode, _fmt(p.latency_mean_ms), _fmt(p.mrr_active_mean), str(p.failure_zone).lower()])


def write_bgl(rows: Iterable[BglMetrics], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(BGL_COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in BGL_COLUMNS])


def read_bgl(path: str | Path) -> list[BglMetrics]:
    p = Path(path)
    if not p.is_file():
        raise MissingInput(f"BGL results file not found: {p}")
    with open(p, newline="", encoding="utf-8") as fh:
        return [
            BglMetrics(
                mode=r["mode"], mrr=float(r["mrr"]), latency_mean_ms=float(r["latency_mean_ms"]),
                essential_lost=int(r["essential_lost"]), pruned_total=int(r["pruned_total"]),
                n_facts=int(r["n_facts"]), n_queries=int(r["n_queries"]),
            )
            for r in csv.DictReader(fh)
        ]
