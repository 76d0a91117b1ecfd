"""
Saturation sweep at desk scale
==============================

Five modes over two seeds at 1/10 of the full stream. Use the ``htm-ear
ablate`` command for the full 15000-fact sweep.
"""

# %%
from htm_ear.cli import render_tables
from htm_ear.evaluation import aggregate, pareto_points, run_scenario
from htm_ear.memory_tiers import MODES, SystemConfig
from htm_ear.workload import Scenario

seeds = (42, 43)
runs = []
for mode in MODES:
    for seed in seeds:
        scn = Scenario(seed=seed).scaled(0.1)
        runs.append(run_scenario(SystemConfig(mode=mode, seed=seed), scn))

print(render_tables(runs, seeds))

# %%
for p in pareto_points(aggregate(runs, seeds)):
    print(f"{p.mode:<17} {p.latency_mean_ms:6.2f} ms  MRR {p.mrr_active_mean:.3f}  failure zone: {p.failure_zone}")
