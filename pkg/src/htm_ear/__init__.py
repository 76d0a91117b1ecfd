"""Two-tier bounded semantic memory with importance-aware eviction.

Facts enter a small HNSW-indexed working tier (L1). Overflow moves the
lowest-scoring items to a larger archival tier (L2), whose own overflow is
deleted permanently and tallied as essential loss when important. Queries
search L1 first and fall back to L2 when the top hit is not similar enough
or misses a query entity.
"""

__version__ = "0.1.0"

from .ann_index import FlatIndex, HNSWIndex, SearchHit
from .embedding import HashingEmbedder, PrecomputedEmbeddings, similarity, tokenize
from .evaluation import RunMetrics, aggregate, mrr, pareto_points, run_bgl, run_scenario
from .memory_tiers import MODES, Fact, MemoryItem, Residency, SystemConfig, TieredMemory, eviction_score
from .retrieval import Query, RetrievalResult, Retriever, gate, rerank, retrieve, score_candidate
from .workload import Scenario, extract_entities, generate_synthetic, make_bgl_queries, parse_bgl
