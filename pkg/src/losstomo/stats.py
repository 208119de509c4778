"""Single- and co-observation counts at an internal node.

For node ``k`` with ordered children ``d_k = (c_0, ..., c_{d-1})`` a subset
``x`` of the children is encoded as a bitmask whose bit ``b`` stands for
``c_b``.  ``I_k(x)`` counts the probes seen by every descendant subtree in
``x``; ``#(x) = 1`` gives the single observations.

Counts are obtained from a histogram of per-probe observation patterns
followed by a superset-sum (zeta) transform over the ``2^d`` masks, so the
cost is ``O(n + d 2^d)`` instead of touching the probe matrix once per
subset.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import IncompleteStats, LeafNode, OrderOutOfRange
from .simulate import ProbeTrace
from .tree import Tree

DENSE_LIMIT = 20


def popcount(mask: int) -> int:
    return mask.bit_count()


@lru_cache(maxsize=None)
def masks_of_order(d: int, order: int) -> tuple[int, ...]:
    """Bitmasks over ``d`` bits with ``order`` bits set, in increasing numeric order."""
    return tuple(sorted(sum(1 << b for b in combo) for combo in itertools.combinations(range(d), order)))


def bits(mask: int) -> list[int]:
    return [b for b in range(mask.bit_length()) if mask >> b & 1]


@dataclass(frozen=True)
class Indicators:
    """Per-probe observation of each descendant subtree of ``node``.

    ``values[i, b]`` is 1 when some unmasked receiver below ``children[b]``
    saw probe ``i``.  ``unknown[i, b]`` is True when every receiver below
    ``children[b]`` is masked for probe ``i`` (``values`` is 0 there).
    """

    node: int
    children: tuple
    values: np.ndarray
    unknown: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.values.shape[0]


def descendant_indicators(tr: ProbeTrace, t: Tree, k: int) -> Indicators:
    children = t.children[k]
    if not children:
        raise LeafNode(f"node {k} has no children")
    obs = tr.observed
    cols = {r: i for i, r in enumerate(tr.receivers)}
    values = np.empty((tr.n, len(children)), dtype=np.uint8)
    unknown = np.zeros((tr.n, len(children)), dtype=bool) if tr.mask is not None else None
    for b, c in enumerate(children):
        idx = [cols[r] for r in t.receivers_of(c)]
        values[:, b] = obs[:, idx].any(axis=1)
        if unknown is not None:
            unknown[:, b] = tr.mask[:, idx].all(axis=1)
    if unknown is not None and not unknown.any():
        unknown = None
    return Indicators(k, children, values, unknown)


@dataclass(frozen=True)
class NodeStats:
    """Sufficient statistics at one internal node.

    ``counts[x]`` is ``I_k(x)`` and ``n_eff[x]`` the number of probes for
    which every member of ``x`` had a known observation (``n`` without
    missing data).  Keys run over all masks with ``1 <= #(x) <= max_order``.
    ``n_k1_direct`` is the confirmed-arrival count taken straight from the
    indicators, independent of the inclusion-exclusion route.
    """

    node: int
    children: tuple
    n: int
    counts: dict
    n_eff: dict
    max_order: int
    n_k1_direct: int
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {c: b for b, c in enumerate(self.children)})

    @property
    def d(self) -> int:
        return len(self.children)

    @property
    def complete(self) -> bool:
        return self.max_order == self.d

    def mask_of(self, x) -> int:
        """Bitmask of ``x``: an int is taken as a mask, an iterable as child node ids."""
        if isinstance(x, (int, np.integer)):
            return int(x)
        try:
            return sum(1 << self._index[c] for c in set(x))
        except KeyError as exc:
            raise ValueError(f"node {exc.args[0]} is not a child of node {self.node}") from None

    def members(self, mask: int) -> tuple:
        return tuple(self.children[b] for b in bits(mask))

    def subsets(self, order: int) -> tuple[int, ...]:
        if not 1 <= order <= self.max_order:
            raise IncompleteStats(f"order {order} not collected (max_order={self.max_order})")
        return masks_of_order(self.d, order)

    def count(self, x) -> int:
        m = self.mask_of(x)
        try:
            return self.counts[m]
        except KeyError:
            raise IncompleteStats(f"no count for subset {self.members(m)} at node {self.node}") from None

    def gamma(self, x) -> float:
        """Empirical rate ``I_k(x) / n_x``; NaN when no probe has ``x`` fully observed."""
        m = self.mask_of(x)
        ne = self.n_eff[m]
        return self.count(m) / ne if ne else float("nan")

    @property
    def gamma_hat(self) -> dict:
        return {c: self.gamma(1 << b) for b, c in enumerate(self.children)}

    @property
    def gamma_vector(self) -> np.ndarray:
        return np.array([self.gamma(1 << b) for b in range(self.d)])

    @property
    def n_k1(self) -> int:
        return confirmed_arrivals(self) if self.complete else self.n_k1_direct

    @property
    def gamma_k_hat(self) -> float:
        return self.n_k1 / self.n

    @property
    def masked(self) -> bool:
        return any(v != self.n for v in self.n_eff.values())

    def drop_silent(self) -> tuple["NodeStats", tuple]:
        """Remove children that never observed a probe.

        Returns the reduced statistics and the dropped child ids.  A silent
        child contributes nothing to any count, so the confirmed arrivals
        are unchanged.
        """
        dropped = tuple(c for b, c in enumerate(self.children) if self.counts[1 << b] == 0)
        if not dropped:
            return self, ()
        old = [b for b, c in enumerate(self.children) if c not in dropped]
        keep_mask = sum(1 << b for b in old)

        def pack(m):
            return sum(1 << i for i, b in enumerate(old) if m >> b & 1)

        kept = sorted((m for m in self.counts if m & ~keep_mask == 0),
                      key=lambda m: (popcount(pack(m)), pack(m)))
        counts = {pack(m): self.counts[m] for m in kept}
        n_eff = {pack(m): self.n_eff[m] for m in kept}
        reduced = NodeStats(self.node, tuple(self.children[b] for b in old), self.n, counts,
                            n_eff, min(self.max_order, len(old)), self.n_k1_direct)
        return reduced, dropped

    def to_dict(self) -> dict:
        return {
            "node": self.node,
            "children": list(self.children),
            "n": self.n,
            "max_order": self.max_order,
            "n_k1": self.n_k1_direct,
            "counts": [[m, self.counts[m], self.n_eff[m]] for m in self.counts],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NodeStats":
        counts = {int(m): int(c) for m, c, _ in data["counts"]}
        n_eff = {int(m): int(e) for m, _, e in data["counts"]}
        return cls(data["node"], tuple(data["children"]), data["n"], counts, n_eff,
                   data["max_order"], data["n_k1"])


def dump_stats(stats: NodeStats, dest) -> None:
    """Write ``stats`` as JSON: subset bitmask, count and effective n per subset."""
    text = json.dumps(stats.to_dict(), indent=1) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w") as fh:
            fh.write(text)


def load_stats(src) -> NodeStats:
    if hasattr(src, "read"):
        return NodeStats.from_dict(json.load(src))
    with open(src) as fh:
        return NodeStats.from_dict(json.load(fh))


def _superset_sums(patterns: np.ndarray, d: int) -> np.ndarray:
    f = np.bincount(patterns, minlength=1 << d).astype(np.int64)
    for b in range(d):
        g = f.reshape(-1, 2, 1 << b)
        g[:, 0, :] += g[:, 1, :]
    return f


def co_observations(ind: Indicators, max_order: int | None = None) -> NodeStats:
    """Count ``I_k(x)`` for every subset with ``1 <= #(x) <= max_order``."""
    d = len(ind.children)
    if max_order is None:
        max_order = d
    if not 1 <= max_order <= d:
        raise OrderOutOfRange(f"max_order must lie in [1, {d}], got {max_order}")
    if d > DENSE_LIMIT and max_order > 3:
        raise OrderOutOfRange(f"{d} descendants: full subset enumeration refused, use max_order <= 3")
    n = ind.n
    vals = ind.values.astype(bool)
    known = None if ind.unknown is None else ~ind.unknown
    n_k1 = int(vals.any(axis=1).sum())
    wanted = [m for i in range(1, max_order + 1) for m in masks_of_order(d, i)]
    if d <= DENSE_LIMIT:
        weights = 1 << np.arange(d, dtype=np.int64)
        I = _superset_sums(vals.astype(np.int64) @ weights, d)
        counts = {m: int(I[m]) for m in wanted}
        if known is None:
            n_eff = dict.fromkeys(wanted, n)
        else:
            K = _superset_sums(known.astype(np.int64) @ weights, d)
            n_eff = {m: int(K[m]) for m in wanted}
    else:
        counts, n_eff = {}, {}
        for m in wanted:
            cols = bits(m)
            counts[m] = int(vals[:, cols].all(axis=1).sum())
            n_eff[m] = n if known is None else int(known[:, cols].all(axis=1).sum())
    return NodeStats(ind.node, ind.children, n, counts, n_eff, max_order, n_k1)


def node_stats(tr: ProbeTrace, t: Tree, k: int, max_order: int | None = None) -> NodeStats:
    return co_observations(descendant_indicators(tr, t, k), max_order)


def confirmed_arrivals(stats: NodeStats) -> int:
    """``n_k(1)`` by inclusion-exclusion over all co-observation counts."""
    if not stats.complete:
        raise IncompleteStats(f"node {stats.node}: counts collected only up to order {stats.max_order}")
    return sum((-1) ** (popcount(m) - 1) * c for m, c in stats.counts.items())


@dataclass(frozen=True)
class ValidityReport:
    """Which estimators the observations at ``node`` can support.

    ``zero_sets`` lists the subsets (as child-id tuples) with ``#(x) >= 2``
    and no co-observation.  ``valid_indices`` are the orders ``i >= 2``
    whose co-observations are all nonzero; ``trimmable_indices`` are the
    orders with at least one zero and at least one nonzero subset, usable
    once the zero subsets are dropped.
    """

    node: int
    zero_sets: list
    valid_indices: list
    trimmable_indices: list
    complete: bool

    @property
    def full_valid(self) -> bool:
        return self.complete and not self.zero_sets


def classify_validity(stats: NodeStats) -> ValidityReport:
    zero_sets, valid, trimmable = [], [], []
    for i in range(2, stats.max_order + 1):
        zeros = [m for m in stats.subsets(i) if stats.counts[m] == 0]
        zero_sets.extend(stats.members(m) for m in zeros)
        if not zeros:
            valid.append(i)
        elif len(zeros) < len(stats.subsets(i)):
            trimmable.append(i)
    return ValidityReport(stats.node, zero_sets, valid, trimmable, stats.complete)
