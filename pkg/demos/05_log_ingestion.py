"""
Log ingestion in BGL record layout
==================================

Parses BGL-formatted lines into facts, derives entity queries, and runs the
three log-benchmark modes. Point ``LOG`` at the public BGL file to use real
data; otherwise a generated sample in the same layout is used.
"""

# %%
import os
import tempfile
from pathlib import Path

from htm_ear.evaluation import run_bgl
from htm_ear.memory_tiers import SystemConfig
from htm_ear.workload import make_bgl_queries, parse_bgl, synthetic_bgl_lines

LOG = os.environ.get("HTM_EAR_BGL_LOG")
if LOG is None:
    LOG = Path(tempfile.mkdtemp()) / "sample_bgl.log"
    LOG.write_text("\n".join(synthetic_bgl_lines(2000, seed=3)) + "\n")
    print("using generated sample", LOG)

facts = parse_bgl(LOG, limit=2000)
queries = make_bgl_queries(facts)
print(facts[0])
print(queries[0])
print(len(facts), "facts,", len(queries), "queries,", sum(f.importance >= 0.85 for f in facts), "essential")

# %%
for mode in ("full", "oracle_unbounded", "lru"):
    m = run_bgl(SystemConfig(mode=mode), facts, queries)
    print(f"{mode:<17} MRR {m.mrr:.3f}  latency {m.latency_mean_ms:.2f} ms  essential lost {m.essential_lost}")
