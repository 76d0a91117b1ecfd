"""
Gated routing and re-ranking
============================

A query stays in L1 when the top L1 hit is close (sim >= 0.84) and covers
every query entity. Otherwise L2 is searched as well.
"""

# %%
from htm_ear.memory_tiers import SystemConfig, TieredMemory
from htm_ear.retrieval import Retriever
from htm_ear.workload import Scenario, generate_synthetic

scn = Scenario(n_facts=1200, l1_capacity=40, l2_capacity=400, seed=5)
facts, queries = generate_synthetic(scn)

for mode in ("full", "no_gate", "no_ce"):
    cfg = SystemConfig(mode=mode, l1_capacity=scn.l1_capacity, l2_capacity=scn.l2_capacity)
    mem = TieredMemory(cfg)
    for f in facts:
        mem.insert_fact(f)
    retr = Retriever(mem)
    # pick one old fact that still lives in L2, and the newest fact
    old = next(q for q in queries if mem.residency(q.gold_id).value == "L2")
    for q in (old, queries[-1]):
        r = retr.retrieve(q)
        rank = r.ids.index(q.gold_id) + 1 if q.gold_id in r.ids else None
        print(f"{mode:>7} {q.gold_id} route={r.route.value:<10} gate_sim={r.gate_sim:.3f} rank={rank}")
    print(f"{mode:>7} gate decisions={retr.stats.gate_decisions} L2 searches={retr.stats.l2_searches}")
