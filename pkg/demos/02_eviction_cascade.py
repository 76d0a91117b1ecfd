"""
Batch eviction across two tiers
===============================

A full L1 sheds its lowest-scoring 15% into L2; a full L2 deletes its
lowest-scoring 15% for good. The importance policy keeps essential facts,
plain LRU does not.
"""

# %%
import logging

from htm_ear.memory_tiers import SystemConfig, TieredMemory
from htm_ear.workload import Scenario, generate_synthetic

logging.basicConfig(level=logging.WARNING)

scn = Scenario(n_facts=3000, l1_capacity=100, l2_capacity=1000, seed=1)
facts, _ = generate_synthetic(scn)
print("essential facts in stream:", sum(f.importance >= 0.85 for f in facts))

# %%
for mode in ("full", "lru"):
    cfg = SystemConfig(mode=mode, l1_capacity=scn.l1_capacity, l2_capacity=scn.l2_capacity, index="flat")
    mem = TieredMemory(cfg)
    for f in facts:
        mem.insert_fact(f)
    led = mem.ledger
    print(f"{mode:>5}: L1={len(mem.l1)} L2={len(mem.l2)} pruned={led.pruned_total} essential lost={led.essential_lost}")

# %%
# `mem` is the LRU run: its L2 holds the most recent arrivals regardless of
# importance, so the essential share there is just the base rate.
l2_essential = sum(it.fact.importance >= 0.85 for it in mem.l2)
print("lru L2 essential share:", round(l2_essential / len(mem.l2), 3))
