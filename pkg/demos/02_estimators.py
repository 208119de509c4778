"""
Comparing the estimators at one node
====================================

On an eight-leaf star the full-likelihood estimate and the explicit
estimators all land near the true pass rate of the shared link.
"""
from losstomo import EstimatorId, estimate_tree, node_stats, run_estimator, simulate, star_tree

t = star_tree([0.99] * 8, 0.95)
tr = simulate(t, 9900, seed=3)
stats = node_stats(tr, t, 1)

suite = [EstimatorId.full(), EstimatorId.composite(2), EstimatorId.composite(3), EstimatorId.composite(8),
         EstimatorId.local((2, 3)), EstimatorId.grouped((2, 3, 4, 5), (6, 7, 8, 9))]
for eid in suite:
    print(f"{eid.label:28s} {run_estimator(stats, eid).value:.5f}")

# %%
# ``estimate_tree`` runs the default selection rule at every internal node
# and turns path rates into link loss rates.
print(estimate_tree(tr, t, suite=suite[1:3]).to_text())
