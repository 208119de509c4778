"""Path pass-rate estimators for an internal node, and tree-wide estimation.

All per-node estimators take a :class:`~losstomo.stats.NodeStats` and return
an :class:`Estimate`.  Values above one (sampling noise) are clamped to 1 and
keep the unclamped number in ``Estimate.raw``.

``full_mle``
    Root of ``1 - g_k/A = prod_j (1 - g_j/A)``, which uses every
    co-observation order at once.
``composite``
    Explicit estimator built from the ``i``-wise co-observations only::

        A(i) = (sum_{#x=i} prod_{j in x} g_j / sum_{#x=i} I(x)/n) ** (1/(i-1))

``local``
    The same ratio restricted to a single subset ``x``.
``grouped``
    Children split into two virtual descendants; closed form of the binary
    likelihood equation.
``weighted_composite``
    ``composite`` with per-subset weights and per-subset effective sample
    sizes, for traces with missing observations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import (AllWeightsZero, IncompleteStats, InvalidData, NoRootInRange,
                     OrderOutOfRange, TomographyError)
from .simulate import ProbeTrace
from .stats import NodeStats, ValidityReport, bits, classify_validity, node_stats, popcount
from .tree import Tree, link_rates_from_paths

SOLVER_TOL = 1e-12


@dataclass(frozen=True)
class EstimatorId:
    """Identity of an estimator.

    ``kind`` is one of ``full``, ``composite``, ``trimmed``, ``local``,
    ``grouped`` or ``weighted``.  ``order`` applies to the composite family,
    ``subset`` (child node ids) to ``local`` and ``groups`` to ``grouped``.
    """

    kind: str
    order: int | None = None
    subset: tuple | None = None
    groups: tuple | None = None

    @classmethod
    def full(cls):
        return cls("full")

    @classmethod
    def composite(cls, i: int):
        if i < 2:
            raise OrderOutOfRange(f"composite order must be >= 2, got {i}")
        return cls("composite", order=i)

    @classmethod
    def trimmed(cls, i: int):
        return cls("trimmed", order=i)

    @classmethod
    def weighted(cls, i: int):
        return cls("weighted", order=i)

    @classmethod
    def local(cls, subset: Iterable[int]):
        subset = tuple(sorted(set(subset)))
        if len(subset) < 2:
            raise OrderOutOfRange("a local estimator needs a subset of at least two descendants")
        return cls("local", subset=subset)

    @classmethod
    def grouped(cls, g1: Iterable[int], g2: Iterable[int]):
        return cls("grouped", groups=(tuple(sorted(g1)), tuple(sorted(g2))))

    @property
    def label(self) -> str:
        if self.kind == "full":
            return "full"
        if self.kind in ("composite", "trimmed", "weighted"):
            return f"{self.kind}({self.order})"
        if self.kind == "local":
            return "local(" + ",".join(map(str, self.subset)) + ")"
        g1, g2 = self.groups
        return "grouped(" + ",".join(map(str, g1)) + "|" + ",".join(map(str, g2)) + ")"

    def __str__(self):
        return self.label


_ALIASES = {"full": "full", "pair": "composite(2)", "triple": "composite(3)"}


def parse_estimator(text: str) -> EstimatorId:
    """Inverse of :attr:`EstimatorId.label`; also accepts ``pair`` and ``triple``."""
    s = _ALIASES.get(text.strip().lower(), text.strip().lower()).replace(" ", "")
    if s == "full":
        return EstimatorId.full()
    if "(" not in s or not s.endswith(")"):
        raise ValueError(f"cannot parse estimator {text!r}")
    kind, arg = s[:-1].split("(", 1)
    try:
        if kind == "composite":
            return EstimatorId.composite(int(arg))
        if kind == "trimmed":
            return EstimatorId.trimmed(int(arg))
        if kind == "weighted":
            return EstimatorId.weighted(int(arg))
        if kind == "local":
            return EstimatorId.local(int(c) for c in arg.split(","))
        if kind == "grouped":
            g1, g2 = arg.split("|")
            return EstimatorId.grouped([int(c) for c in g1.split(",")], [int(c) for c in g2.split(",")])
    except ValueError:
        pass
    raise ValueError(f"cannot parse estimator {text!r}")


@dataclass(frozen=True)
class Estimate:
    value: float
    raw: float
    estimator: EstimatorId
    flags: tuple = ()
    residual: float = 0.0

    @property
    def clamped(self) -> bool:
        return self.raw > 1.0

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class Invalid:
    """Placeholder recorded when an estimator cannot be applied."""

    estimator: EstimatorId
    reason: str

    value = float("nan")

    def __float__(self):
        return float("nan")


def _finish(raw: float, eid: EstimatorId, flags=(), residual=0.0) -> Estimate:
    flags = tuple(flags)
    if raw > 1.0:
        flags += ("clamped",)
    return Estimate(min(raw, 1.0), raw, eid, flags, residual)


def _product(g: np.ndarray, mask: int) -> float:
    p = 1.0
    for b in bits(mask):
        p *= g[b]
    return p


def _check_order(stats: NodeStats, i: int) -> None:
    if not 2 <= i <= stats.d:
        raise OrderOutOfRange(f"order {i} outside [2, {stats.d}] at node {stats.node}")


# -- likelihood equation -------------------------------------------------------

def likelihood_residual(A: float, gamma_k: float, gamma: np.ndarray) -> float:
    """``h(A) = 1 - g_k/A - prod_j (1 - g_j/A)``; zero at the full-likelihood estimate."""
    return 1.0 - gamma_k / A - float(np.prod(1.0 - gamma / A))


def _likelihood_slope(A: float, gamma_k: float, gamma: np.ndarray) -> float:
    r = 1.0 - gamma / A
    return gamma_k / A**2 - float(np.prod(r)) * float(np.sum((gamma / A**2) / r))


def correspondence_residual(stats: NodeStats, A: float) -> float:
    """Order-by-order form of the likelihood equation.

    ``sum_{i>=2} (-1)^i sum_{#x=i} (I(x)/n - prod_{j in x} g_j / A^(i-1))``,
    which equals ``A * h(A)`` and vanishes at the full-likelihood estimate.
    """
    if not stats.complete:
        raise IncompleteStats("correspondence residual needs every co-observation order")
    g = np.array([stats.count(1 << b) / stats.n for b in range(stats.d)])
    total = 0.0
    for i in range(2, stats.d + 1):
        sign = 1.0 if i % 2 == 0 else -1.0
        term = sum(stats.counts[m] / stats.n - _product(g, m) / A ** (i - 1) for m in stats.subsets(i))
        total += sign * term
    return total


def _solve(gamma_k, gamma, x0, tol=SOLVER_TOL, max_iter=200):
    """Safeguarded Newton on ``h`` over the bracket ``(gamma_k, hi]``."""
    lo = gamma_k
    hi = 1.0
    for _ in range(64):
        if likelihood_residual(hi, gamma_k, gamma) > 0:
            break
        hi *= 2.0
    else:
        raise NoRootInRange("likelihood equation does not change sign above gamma_k")
    A = x0 if lo < x0 < hi else 0.5 * (lo + hi)
    for _ in range(max_iter):
        h = likelihood_residual(A, gamma_k, gamma)
        if h == 0.0:
            break
        if h < 0:
            lo = A
        else:
            hi = A
        slope = _likelihood_slope(A, gamma_k, gamma)
        step = A - h / slope if slope > 0 else math.nan
        # damping: fall back to bisection when Newton leaves the bracket
        A_new = step if lo < step < hi else 0.5 * (lo + hi)
        if abs(A_new - A) <= 4 * np.finfo(float).eps * A:
            A = A_new
            break
        A = A_new
    res = likelihood_residual(A, gamma_k, gamma)
    if abs(res) > tol:
        raise NoRootInRange(f"solver stalled with residual {res:.3e}")
    return A, res


def full_mle(stats: NodeStats, tol: float = SOLVER_TOL) -> Estimate:
    """Full-likelihood estimate of the path pass rate ``A_k``.

    Raises
    ------
    InvalidData
        Some co-observation count is zero, so the estimate cannot converge to
        the true rate.
    NoRootInRange
        The observations do not bracket a root above ``gamma_k``.
    """
    eid = EstimatorId.full()
    report = classify_validity(stats)
    if not report.complete:
        raise IncompleteStats(f"node {stats.node}: full likelihood needs all {stats.d} orders")
    if report.zero_sets:
        raise InvalidData(f"node {stats.node}: zero co-observation for {report.zero_sets[0]}")
    gk = stats.gamma_k_hat
    g = np.array([stats.count(1 << b) / stats.n for b in range(stats.d)])
    if gk <= 0:
        raise InvalidData(f"node {stats.node}: no confirmed arrivals")
    if g.max() > gk:
        raise NoRootInRange(f"node {stats.node}: descendant rate exceeds confirmed-arrival rate")
    if g.max() == gk:
        # h(gamma_k) = 0 exactly and h > 0 above it: the root sits on the boundary
        return _finish(gk, eid, ("boundary",))
    try:
        x0 = composite(stats, stats.d).raw
    except TomographyError:
        x0 = gk * 1.0001
    A, res = _solve(gk, g, x0, tol)
    return _finish(A, eid, residual=res)


# -- explicit estimators -------------------------------------------------------

def composite(stats: NodeStats, i: int) -> Estimate:
    """Explicit ``i``-wise composite-likelihood estimate."""
    _check_order(stats, i)
    n = stats.n
    g = np.array([stats.count(1 << b) / n for b in range(stats.d)])
    num = den = 0.0
    for m in stats.subsets(i):
        num += _product(g, m)
        den += stats.counts[m] / n
    if den == 0:
        raise InvalidData(f"node {stats.node}: every order-{i} co-observation is zero")
    return _finish((num / den) ** (1.0 / (i - 1)), EstimatorId.composite(i))


def local_ratios(stats: NodeStats, i: int) -> np.ndarray:
    """``prod_{j in x} g_j / (I(x)/n)`` for every subset of order ``i`` (inf when I(x)=0)."""
    n = stats.n
    g = np.array([stats.count(1 << b) / n for b in range(stats.d)])
    out = []
    for m in stats.subsets(i):
        c = stats.counts[m]
        out.append(_product(g, m) / (c / n) if c else math.inf)
    return np.array(out)


def local(stats: NodeStats, x) -> Estimate:
    """Estimate from one co-observation subset ``x`` (child ids or bitmask)."""
    m = stats.mask_of(x)
    size = popcount(m)
    if size < 2:
        raise OrderOutOfRange("a local estimator needs a subset of at least two descendants")
    c = stats.count(m)
    eid = EstimatorId.local(stats.members(m))
    if c == 0:
        raise InvalidData(f"node {stats.node}: subset {eid.subset} was never co-observed")
    n = stats.n
    g = np.array([stats.count(1 << b) / n for b in range(stats.d)])
    return _finish((_product(g, m) / (c / n)) ** (1.0 / (size - 1)), eid)


def group_arrivals(stats: NodeStats, group: Iterable[int]) -> int:
    """Probes seen by at least one member of ``group``, by inclusion-exclusion."""
    gm = stats.mask_of(group)
    total = 0
    sub = gm
    while sub:
        total += (-1) ** (popcount(sub) - 1) * stats.count(sub)
        sub = (sub - 1) & gm
    return total


def grouped(stats: NodeStats, g1: Iterable[int], g2: Iterable[int]) -> Estimate:
    """Two virtual descendants made of the child groups ``g1`` and ``g2``."""
    m1, m2 = stats.mask_of(g1), stats.mask_of(g2)
    full = (1 << stats.d) - 1
    if not m1 or not m2 or m1 & m2 or (m1 | m2) != full:
        raise ValueError(f"groups must be nonempty, disjoint and cover the children {stats.children}")
    eid = EstimatorId.grouped(stats.members(m1), stats.members(m2))
    n1, n2 = group_arrivals(stats, m1), group_arrivals(stats, m2)
    cross = n1 + n2 - stats.n_k1
    if cross <= 0:
        raise InvalidData(f"node {stats.node}: the two groups never co-observe a probe")
    n = stats.n
    return _finish((n1 / n) * (n2 / n) / (cross / n), eid)


def weighted_composite(stats: NodeStats, i: int, weights: Mapping | None = None) -> Estimate:
    """Composite estimate with per-subset weights.

    Rates use per-subset effective sample sizes (probes on which every
    member was observed).  The default weight of subset ``x`` is
    ``n_eff(x) / n``, so subsets hit by missing data count less.  Subsets
    absent from an explicit ``weights`` mapping get weight zero.
    """
    _check_order(stats, i)
    subs = stats.subsets(i)
    if weights is None:
        w = {m: stats.n_eff[m] / stats.n for m in subs}
    else:
        w = dict.fromkeys(subs, 0.0)
        for key, val in weights.items():
            m = stats.mask_of(key)
            if m in w:
                if val < 0:
                    raise ValueError(f"negative weight {val} for subset {stats.members(m)}")
                w[m] = float(val)
    g = np.array([stats.gamma(1 << b) for b in range(stats.d)])
    num = den = 0.0
    used = 0
    for m in subs:
        if w[m] == 0 or stats.n_eff[m] == 0:
            continue
        num += w[m] * _product(g, m)
        den += w[m] * stats.gamma(m)
        used += 1
    if not used:
        raise AllWeightsZero(f"node {stats.node}: no order-{i} subset carries weight")
    if den == 0:
        raise InvalidData(f"node {stats.node}: weighted order-{i} co-observations are all zero")
    return _finish((num / den) ** (1.0 / (i - 1)), EstimatorId.weighted(i))


def trimmed_composite(stats: NodeStats, i: int) -> Estimate:
    """``composite`` with the never-co-observed subsets of order ``i`` removed."""
    _check_order(stats, i)
    weights = {m: 1.0 for m in stats.subsets(i) if stats.counts[m] > 0}
    if not weights:
        raise InvalidData(f"node {stats.node}: every order-{i} co-observation is zero")
    est = weighted_composite(stats, i, weights)
    flags = ("trimmed",) if len(weights) < len(stats.subsets(i)) else ()
    return Estimate(est.value, est.raw, EstimatorId.trimmed(i), est.flags + flags)


def run_estimator(stats: NodeStats, eid: EstimatorId) -> Estimate:
    if eid.kind == "full":
        return full_mle(stats)
    if eid.kind == "composite":
        return composite(stats, eid.order)
    if eid.kind == "trimmed":
        return trimmed_composite(stats, eid.order)
    if eid.kind == "weighted":
        return weighted_composite(stats, eid.order)
    if eid.kind == "local":
        return local(stats, eid.subset)
    if eid.kind == "grouped":
        return grouped(stats, *eid.groups)
    raise ValueError(f"unknown estimator kind {eid.kind!r}")


# -- selection and tree-wide estimation ----------------------------------------

Policy = Callable[[NodeStats, ValidityReport], list]


def robust_policy(stats: NodeStats, report: ValidityReport) -> list[EstimatorId]:
    """Candidates in order of preference.

    The full likelihood when every co-observation is present; otherwise the
    explicit estimators from the largest valid order down (a zero at order
    ``i`` invalidates every order above it); then trimmed estimators that
    skip the zero subsets.  Traces with missing observations use the
    weighted composite family instead of the full likelihood.
    """
    if stats.masked:
        out = [EstimatorId.weighted(i) for i in sorted(report.valid_indices, reverse=True)]
        return out + [EstimatorId.trimmed(i) for i in report.trimmable_indices]
    out = [EstimatorId.full()] if report.full_valid else []
    out += [EstimatorId.composite(i) for i in sorted(report.valid_indices, reverse=True)]
    out += [EstimatorId.trimmed(i) for i in report.trimmable_indices]
    return out


@dataclass
class NodeEstimate:
    node: int
    selected: EstimatorId | None
    estimates: dict = field(default_factory=dict)
    validity: ValidityReport | None = None
    flags: list = field(default_factory=list)

    @property
    def value(self) -> float:
        if self.selected is None:
            return float("nan")
        return self.estimates[self.selected].value


@dataclass
class EstimateSet:
    """Per-node estimates, the selected path rates and the derived link loss rates."""

    tree: Tree
    nodes: dict
    A: dict
    link_loss: dict
    flags: dict

    def rows(self) -> list[tuple]:
        out = []
        for k in self.tree.order[1:]:
            loss = self.link_loss.get(k, float("nan"))
            flags = ";".join(self.flags.get(k, []))
            if k in self.nodes:
                ne = self.nodes[k]
                for eid, est in ne.estimates.items():
                    mark = "*" if eid == ne.selected else ""
                    out.append((k, eid.label + mark, float(est), loss, flags))
                if not ne.estimates:
                    out.append((k, "-", float("nan"), loss, flags))
            else:
                out.append((k, "observed", self.A.get(k, float("nan")), loss, flags))
        return out

    def to_text(self) -> str:
        """Tab-separated table: node, estimator (``*`` = selected), A_hat, link loss, flags."""
        lines = ["node\testimator\tA_hat\tlink_loss\tflags"]
        for k, name, a, loss, flags in self.rows():
            lines.append(f"{k}\t{name}\t{a:.10g}\t{loss:.10g}\t{flags}")
        return "\n".join(lines) + "\n"


def _receiver_rates(tr: ProbeTrace) -> dict:
    if tr.mask is None:
        rates = tr.Y.mean(axis=0)
    else:
        seen = (~tr.mask).sum(axis=0)
        rates = np.where(seen > 0, tr.observed.sum(axis=0) / np.maximum(seen, 1), np.nan)
    return {r: float(v) for r, v in zip(tr.receivers, rates)}


def estimate_node(stats: NodeStats, policy: Policy | EstimatorId | None = None,
                  suite: Sequence[EstimatorId] = ()) -> NodeEstimate:
    """Run ``suite`` and the selection ``policy`` on one node's statistics."""
    flags = []
    reduced, dropped = stats.drop_silent()
    if dropped:
        flags.append("dropped-silent:" + ",".join(map(str, dropped)))
    ne = NodeEstimate(stats.node, None, flags=flags)
    if reduced.d < 2:
        flags.append("unidentifiable")
        return ne
    report = classify_validity(reduced)
    ne.validity = report
    if not report.full_valid:
        flags.append("zero-co-observations" if report.complete else "incomplete-stats")

    def attempt(eid):
        if eid not in ne.estimates:
            try:
                ne.estimates[eid] = run_estimator(reduced, eid)
            except (TomographyError, ValueError) as exc:
                ne.estimates[eid] = Invalid(eid, str(exc))
        return ne.estimates[eid]

    for eid in suite:
        attempt(eid)
    if isinstance(policy, EstimatorId):
        candidates = [policy] + robust_policy(reduced, report)
    else:
        candidates = (policy or robust_policy)(reduced, report)
    for pos, eid in enumerate(candidates):
        if isinstance(attempt(eid), Estimate):
            ne.selected = eid
            if pos and isinstance(policy, EstimatorId):
                flags.append(f"fallback:{eid.label}")
            break
    if ne.selected is None:
        flags.append("no-valid-estimator")
    elif ne.estimates[ne.selected].clamped:
        flags.append("clamped-path")
    return ne


def estimate_tree(tr: ProbeTrace, t: Tree, policy: Policy | EstimatorId | None = None,
                  suite: Sequence[EstimatorId] = ()) -> EstimateSet:
    """Estimate every path rate of ``t`` and derive link loss rates.

    Receivers get their observed pass rate; each internal node goes through
    :func:`estimate_node`.  Per-node failures become flags and never abort
    the whole tree.
    """
    A = {0: 1.0, **_receiver_rates(tr)}
    flags: dict = {}
    nodes = {}
    for k in t.internal_nodes:
        max_order = None if len(t.children[k]) <= 20 else 3
        ne = estimate_node(node_stats(tr, t, k, max_order), policy, suite)
        nodes[k] = ne
        if ne.selected is not None:
            A[k] = ne.value
        if ne.flags:
            flags[k] = list(ne.flags)
    A = {k: v for k, v in A.items() if not math.isnan(v)}
    links = link_rates_from_paths(A, t)
    for k in t.order[1:]:
        if k in A and t.parent[k] not in A:
            flags.setdefault(k, []).append("merged-with-parent-link")
        if k in links.clamped:
            flags.setdefault(k, []).append("clamped-link")
    return EstimateSet(t, nodes, A, links.loss, flags)
