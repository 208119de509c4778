"""
Replicated experiments and mean/variance tables
===============================================

Runs the three preset topologies over the standard sample sizes and prints
the loss-rate tables in markdown.  Each cell is the mean and variance of the
estimated loss of the shared link over 20 replications.
"""
from losstomo import ExperimentConfig, emit_table, preset, run_experiment

for name in ("uniform", "mixed", "lossy-root"):
    t, suite = preset(name)
    result = run_experiment(ExperimentConfig(t, replications=20, suite=suite, seed=0))
    print(f"\n## {name}\n")
    print(emit_table(result, "markdown"))
