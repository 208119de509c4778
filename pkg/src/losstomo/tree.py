"""Multicast tree topology, ground-truth link rates and path pass rates.

Nodes are dense integers ``0..m`` with node 0 the source.  Every other node
``k`` hangs below its parent ``f(k)`` through link ``e_k`` whose pass rate is
``alpha[k]``.  Leaves are the receivers.

A topology can be written as a small JSON document::

    {"parents": [null, 0, 1, 1], "alpha": [null, 0.99, 0.98, 0.97]}

``parents[k]`` is the parent of node ``k`` and ``alpha[k]`` the pass rate of
the link entering ``k``; both entries for the root are ``null``.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import CycleDetected, DivisionByZeroPath, MultipleRoots, RateOutOfRange, TopologyError


@dataclass(frozen=True)
class Tree:
    """Validated, immutable multicast tree.

    Attributes
    ----------
    parent : tuple
        ``parent[k]`` is the parent of node ``k``; ``parent[0]`` is None.
    alpha : tuple of float
        Link pass rates, ``alpha[0]`` is fixed to 1.0 (the source has no link).
    """

    parent: tuple
    alpha: tuple

    def __post_init__(self):
        _validate(self.parent, self.alpha)

    @property
    def n_nodes(self) -> int:
        return len(self.parent)

    @cached_property
    def children(self) -> tuple[tuple[int, ...], ...]:
        kids: list[list[int]] = [[] for _ in self.parent]
        for k, p in enumerate(self.parent):
            if p is not None:
                kids[p].append(k)
        return tuple(tuple(sorted(c)) for c in kids)

    @cached_property
    def order(self) -> tuple[int, ...]:
        """Breadth-first order from the root; parents precede children."""
        out, queue = [], deque([0])
        while queue:
            k = queue.popleft()
            out.append(k)
            queue.extend(self.children[k])
        return tuple(out)

    @cached_property
    def receivers(self) -> tuple[int, ...]:
        return tuple(k for k in range(1, self.n_nodes) if not self.children[k])

    @cached_property
    def _receivers_below(self) -> tuple[tuple[int, ...], ...]:
        below: list[tuple[int, ...]] = [()] * self.n_nodes
        for k in reversed(self.order):
            if self.children[k]:
                below[k] = tuple(sorted(r for c in self.children[k] for r in below[c]))
            else:
                below[k] = (k,)
        return tuple(below)

    def receivers_of(self, k: int) -> tuple[int, ...]:
        """Receivers attached to the subtree rooted at node ``k``."""
        return self._receivers_below[k]

    @cached_property
    def internal_nodes(self) -> tuple[int, ...]:
        """Non-source nodes with at least one child, in breadth-first order."""
        return tuple(k for k in self.order if k != 0 and self.children[k])

    def ancestors(self, k: int) -> tuple[int, ...]:
        """``a(k)``: the parent, grandparent, ... up to and including node 0."""
        out = []
        p = self.parent[k]
        while p is not None:
            out.append(p)
            p = self.parent[p]
        return tuple(out)

    def is_leaf(self, k: int) -> bool:
        return not self.children[k]

    @property
    def alpha_array(self) -> np.ndarray:
        return np.asarray(self.alpha, dtype=float)

    def with_alpha(self, alpha: Sequence[float]) -> "Tree":
        alpha = list(alpha)
        alpha[0] = 1.0
        return Tree(self.parent, tuple(float(a) for a in alpha))


def _validate(parent, alpha):
    m = len(parent)
    if m < 2:
        raise TopologyError("a tree needs at least one link")
    if len(alpha) != m:
        raise TopologyError(f"alpha has {len(alpha)} entries, parents has {m}")
    roots = [k for k, p in enumerate(parent) if p is None]
    if len(roots) > 1:
        raise MultipleRoots(f"nodes {roots} have no parent")
    if parent[0] is not None:
        raise TopologyError("node 0 must be the root (its parent must be null)")
    for k in range(1, m):
        p = parent[k]
        if not isinstance(p, (int, np.integer)) or not 0 <= p < m:
            raise TopologyError(f"node {k} has parent {p!r}, which is not a node id")
        if p == k:
            raise CycleDetected(f"node {k} is its own parent")
    # every node must reach the root without revisiting anything
    reached = {0}
    for k in range(1, m):
        path = []
        j = k
        while j not in reached:
            if j in path:
                raise CycleDetected(f"cycle through nodes {sorted(path[path.index(j):])}")
            path.append(j)
            j = parent[j]
        reached.update(path)
    for k in range(1, m):
        a = alpha[k]
        if a is None or not np.isfinite(a) or not 0.0 <= a <= 1.0:
            raise RateOutOfRange(f"alpha[{k}] = {a!r} is outside [0, 1]")


def build_tree(parents: Sequence, alpha: Sequence) -> Tree:
    """Validate a parent list and link pass rates and return a :class:`Tree`.

    ``parents[0]`` must be None; ``alpha[0]`` is ignored.
    """
    parent = tuple(None if p is None else int(p) for p in parents)
    rates = [1.0] + [None if a is None else float(a) for a in list(alpha)[1:]]
    return Tree(parent, tuple(rates))


def tree_from_dict(data: Mapping) -> Tree:
    try:
        return build_tree(data["parents"], data["alpha"])
    except KeyError as exc:
        raise TopologyError(f"topology description lacks field {exc.args[0]!r}") from None


def tree_to_dict(t: Tree) -> dict:
    return {"parents": list(t.parent), "alpha": [None] + [float(a) for a in t.alpha[1:]]}


def load_tree(path) -> Tree:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise TopologyError(f"{path}: not valid JSON ({exc})") from None
    return tree_from_dict(data)


def save_tree(t: Tree, path) -> None:
    Path(path).write_text(json.dumps(tree_to_dict(t), indent=2) + "\n")


def star_tree(leaf_alpha: Sequence[float], root_alpha: float) -> Tree:
    """Source -> node 1 (root link) -> one leaf per entry of ``leaf_alpha``."""
    n = len(leaf_alpha)
    return build_tree([None, 0] + [1] * n, [None, root_alpha, *leaf_alpha])


def random_tree(rng: np.random.Generator, max_depth: int = 3, max_children: int = 4,
                p_internal: float = 0.4, alpha_range: tuple[float, float] = (0.9, 1.0)) -> Tree:
    """Draw a random tree whose internal nodes all have at least two children.

    The source always has a single child, so node 1 carries the root link.
    """
    parents: list = [None, 0]
    level = [1]
    for depth in range(max_depth):
        nxt = []
        for k in level:
            for _ in range(rng.integers(2, max_children + 1)):
                parents.append(k)
                child = len(parents) - 1
                if depth + 1 < max_depth and rng.random() < p_internal:
                    nxt.append(child)
        level = nxt
        if not level:
            break
    lo, hi = alpha_range
    alpha = [None] + list(rng.uniform(lo, hi, size=len(parents) - 1))
    return build_tree(parents, alpha)


@dataclass(frozen=True)
class PathRates:
    """``A[k]``: pass rate of the path 0 -> k.  ``s[k]``: summed link loss over a(k)."""

    A: np.ndarray
    s: np.ndarray


def path_rates(t: Tree) -> PathRates:
    alpha = t.alpha_array
    A = np.ones(t.n_nodes)
    s = np.zeros(t.n_nodes)
    for k in t.order[1:]:
        p = t.parent[k]
        A[k] = A[p] * alpha[k]
        # a(k) excludes k, so the loss of e_k itself is not included
        s[k] = s[p] + (1.0 - alpha[p])
    A.setflags(write=False)
    s.setflags(write=False)
    return PathRates(A, s)


def subtree_pass_rates(t: Tree) -> np.ndarray:
    """Probability that a probe present at node k reaches some receiver below k.

    Leaves give 1.  For a descendant ``j`` of ``k`` the observation rate of
    ``T(j)`` is ``A[k] * alpha[j] * beta[j]``.
    """
    alpha = t.alpha_array
    beta = np.ones(t.n_nodes)
    for k in reversed(t.order):
        if t.children[k]:
            beta[k] = 1.0 - np.prod([1.0 - alpha[c] * beta[c] for c in t.children[k]])
    return beta


@dataclass(frozen=True)
class LinkRates:
    alpha: dict
    clamped: frozenset

    @property
    def loss(self) -> dict:
        return {k: 1.0 - a for k, a in self.alpha.items()}


def link_rates_from_paths(A: Mapping[int, float] | Sequence[float], t: Tree) -> LinkRates:
    """Invert ``A_k = alpha_k * A_f(k)``.

    Nodes absent from ``A`` (or mapped to None) are skipped; the source is
    taken as ``A_0 = 1`` when not given.  Ratios above one are clamped to 1
    and reported in ``clamped``.
    """
    if not isinstance(A, Mapping):
        A = dict(enumerate(A))
    A = {k: v for k, v in A.items() if v is not None}
    A.setdefault(0, 1.0)
    rates, clamped = {}, set()
    for k in t.order[1:]:
        if k not in A:
            continue
        p = t.parent[k]
        while p is not None and p not in A:
            p = t.parent[p]
        if A[p] == 0:
            raise DivisionByZeroPath(f"path rate of node {p} is zero; link {k} undefined")
        r = A[k] / A[p]
        if r > 1.0:
            clamped.add(k)
            r = 1.0
        rates[k] = r
    return LinkRates(rates, frozenset(clamped))
