"""
Missing observations
====================

Hide 20% of the receiver observations completely at random and compare the
plain pairwise estimator (which reads a missing entry as a loss) with the
weighted version that divides each count by the number of probes on which
it was fully observed.
"""
import numpy as np

from losstomo import EstimatorId, estimate_tree, inject_missing, mar_when, node_stats, simulate, star_tree
from losstomo import composite, weighted_composite

t = star_tree([0.99] * 8, 0.99)
plain, weighted = [], []
for r in range(100):
    tr = inject_missing(simulate(t, 9900, (0, r)), 0.2, (0, r, 1))
    stats = node_stats(tr, t, 1)
    plain.append(composite(stats, 2).value)
    weighted.append(weighted_composite(stats, 2).value)
print(f"plain    mean {np.mean(plain):.5f}  sd {np.std(plain):.5f}")
print(f"weighted mean {np.mean(weighted):.5f}  sd {np.std(weighted):.5f}")

# %%
# A missing-at-random rule: receiver 2's observation is hidden whenever
# receiver 3 missed the probe.  The tree-wide estimate switches to the
# weighted family automatically.
tr = inject_missing(simulate(t, 9900, 5), mar_when(target=2, trigger=3, value=0), 6)
es = estimate_tree(tr, t)
print(es.nodes[1].selected, round(es.nodes[1].value, 5))
