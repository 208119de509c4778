"""Replicated simulation experiments and their mean/variance tables.

For every sample size the harness simulates ``replications`` independent
traces, runs each estimator of the suite at one node and records the loss
rate of that node's link.  The table reports, per size and estimator, the
mean and the variance of those per-replication loss estimates (population
variance, ``ddof=0``, over the replications).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import TomographyError
from .estimators import EstimatorId, estimate_node, run_estimator
from .simulate import inject_missing, simulate
from .stats import node_stats
from .tree import Tree, star_tree

DEFAULT_SIZES = tuple(range(300, 3001, 300)) + (4800, 9900)


def _preset_uniform():
    t = star_tree([0.99] * 8, 0.99)
    return t, (2, 3), (2, 3, 4)


def _preset_mixed():
    # leaves 8 and 9 lose 5%; local estimators straddle the two classes
    t = star_tree([0.99] * 6 + [0.95] * 2, 0.99)
    return t, (2, 8), (2, 3, 8)


def _preset_lossy_root():
    t = star_tree([0.99] * 4 + [0.95] * 4, 0.95)
    return t, (2, 3), (2, 3, 4)


PRESETS = {
    "uniform": _preset_uniform,
    "mixed": _preset_mixed,
    "lossy-root": _preset_lossy_root,
}

def preset(name: str) -> tuple[Tree, tuple[EstimatorId, ...]]:
    """Eight-leaf star topologies with their five-estimator suite.

    ``uniform``: every link loses 1%.  ``mixed``: six leaf links at 1%, two
    at 5%.  ``lossy-root``: root link 5%, four leaf links at 1% and four at 5%.
    """
    try:
        t, pair, triple = PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return t, default_suite(t, pair=pair, triple=triple)


def default_suite(t: Tree, node: int = 1, pair=None, triple=None) -> tuple[EstimatorId, ...]:
    kids = t.children[node]
    suite = [EstimatorId.full(), EstimatorId.composite(2)]
    if len(kids) >= 3:
        suite.append(EstimatorId.composite(3))
    suite.append(EstimatorId.local(pair or kids[:2]))
    if len(kids) >= 3:
        suite.append(EstimatorId.local(triple or kids[:3]))
    return tuple(suite)


@dataclass
class ExperimentConfig:
    tree: Tree
    sizes: Sequence[int] = DEFAULT_SIZES
    replications: int = 20
    suite: Sequence[EstimatorId] | None = None
    seed: int = 0
    missing: float | None = None
    node: int | None = None

    def __post_init__(self):
        if not self.sizes or min(self.sizes) < 1:
            raise ValueError("sample sizes must be >= 1")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.node is None:
            self.node = self.tree.children[0][0]
        if not self.tree.children[self.node]:
            raise ValueError(f"node {self.node} is a receiver; pick an internal node")
        if self.suite is None:
            self.suite = default_suite(self.tree, self.node)
        if not self.suite:
            raise ValueError("estimator suite is empty")


@dataclass
class Cell:
    n: int
    estimator: EstimatorId
    mean: float
    var: float
    n_valid: int
    losses: np.ndarray = field(repr=False, default=None)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    cells: list

    def cell(self, n: int, eid: EstimatorId) -> Cell:
        for c in self.cells:
            if c.n == n and c.estimator == eid:
                return c
        raise KeyError((n, eid))


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Replication ``r`` at size ``n`` is simulated with seed ``(cfg.seed, n, r)``."""
    t, k = cfg.tree, cfg.node
    parent = t.parent[k]
    cells = []
    for n in cfg.sizes:
        losses = np.full((len(cfg.suite), cfg.replications), np.nan)
        for r in range(cfg.replications):
            tr = simulate(t, n, (cfg.seed, n, r))
            if cfg.missing:
                tr = inject_missing(tr, cfg.missing, (cfg.seed, n, r, 1))
            stats = node_stats(tr, t, k)
            A_parent = 1.0 if parent == 0 else estimate_node(node_stats(tr, t, parent)).value
            for e, eid in enumerate(cfg.suite):
                try:
                    A = run_estimator(stats, eid).value
                except (TomographyError, ValueError):
                    continue
                losses[e, r] = 1.0 - min(A / A_parent, 1.0)
        for e, eid in enumerate(cfg.suite):
            ok = losses[e][~np.isnan(losses[e])]
            mean = float(ok.mean()) if ok.size else float("nan")
            var = float(ok.var()) if ok.size else float("nan")
            cells.append(Cell(n, eid, mean, var, int(ok.size), losses[e]))
    return ExperimentResult(cfg, cells)


def column_names(suite: Sequence[EstimatorId]) -> list[str]:
    """Short names for the default five-estimator suite, labels otherwise."""
    names = []
    for eid in suite:
        if eid.kind == "full":
            names.append("Full")
        elif eid.kind == "composite" and eid.order in (2, 3):
            names.append("Pair" if eid.order == 2 else "Triple")
        elif eid.kind == "local" and len(eid.subset) in (2, 3):
            names.append("SinglePair" if len(eid.subset) == 2 else "SingleTriple")
        else:
            names.append(eid.label)
    if len(set(names)) < len(names):
        return [eid.label for eid in suite]
    return names


def _num(v: float, pattern: str) -> str:
    return "invalid" if np.isnan(v) else format(v, pattern)


def emit_table(result: ExperimentResult, fmt: str = "csv", dest=None) -> str:
    """Render ``result`` as ``csv`` (long form) or ``markdown`` (one row per size).

    The text is returned and, when ``dest`` is a path or file object, also
    written there.
    """
    if not result.cells:
        raise ValueError("no results to emit")
    suite = list(result.config.suite)
    names = column_names(suite)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "estimator", "mean", "var"])
        for c in result.cells:
            w.writerow([c.n, names[suite.index(c.estimator)], _num(c.mean, ".10g"), _num(c.var, ".6e")])
        text = buf.getvalue()
    elif fmt == "markdown":
        sizes = list(dict.fromkeys(c.n for c in result.cells))
        head = "| samples | " + " | ".join(f"{nm} Mean | {nm} Var" for nm in names) + " |"
        rule = "|---:|" + "---:|---:|" * len(names)
        lines = [head, rule]
        for n in sizes:
            row = [str(n)]
            for eid in suite:
                c = result.cell(n, eid)
                row += [_num(c.mean, ".4f"), _num(c.var, ".2E")]
            lines.append("| " + " | ".join(row) + " |")
        text = "\n".join(lines) + "\n"
    else:
        raise ValueError(f"unknown table format {fmt!r}")
    if dest is not None:
        if hasattr(dest, "write"):
            dest.write(text)
        else:
            with open(dest, "w") as fh:
                fh.write(text)
    return text
