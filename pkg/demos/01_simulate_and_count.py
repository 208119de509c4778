"""
Simulating probes and counting co-observations
==============================================

Build a small two-level tree, send probes down it and look at the
statistics collected at the internal nodes.
"""
import numpy as np

from losstomo import build_tree, confirmed_arrivals, node_stats, path_rates, simulate

# node 0 is the source; node 1 branches to node 2 (two receivers) and receiver 3
t = build_tree([None, 0, 1, 1, 2, 2], [None, 0.95, 0.9, 0.98, 0.97, 0.99])
print("receivers:", t.receivers)
print("path pass rates:", np.round(path_rates(t).A, 4))

tr = simulate(t, 10_000, seed=1)
print("observed receiver rates:", tr.Y.mean(axis=0).round(4))

# %%
# Every subset of node 1's children gets a count of the probes that all of
# them saw.  Inclusion-exclusion over those counts gives back the number of
# probes seen by anyone below node 1.
stats = node_stats(tr, t, 1)
for mask, count in stats.counts.items():
    print(stats.members(mask), count)
print("confirmed arrivals:", confirmed_arrivals(stats), "direct:", stats.n_k1_direct)
