"""Delta-method asymptotic variance of the explicit estimators.

For the ``i``-wise composite estimator at node ``k`` the estimate is a
smooth function of the moment vector

    (gamma_x : #x = i) ++ (gamma_j : j in d_k)

where ``gamma_x`` is the probability that every descendant in ``x`` sees a
probe.  With ``C`` the per-probe covariance of the corresponding
indicators and ``grad`` the gradient of the estimator, ``n * Var`` tends to
``grad @ C @ grad``.

Two covariance models are offered: the exact one, and its first-order
expansion in the link loss rates, ``s_k + t_(x & y)`` (``s_k`` the loss of
the path from the source to ``k``, ``t_x`` the summed loss of the
descendants in ``x``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import TomographyError
from .estimators import EstimatorId, run_estimator
from .simulate import simulate
from .stats import bits, masks_of_order, node_stats, popcount
from .tree import Tree, path_rates, subtree_pass_rates


def _mask(x) -> int:
    if isinstance(x, (int, np.integer)):
        return int(x)
    return sum(1 << b for b in set(x))


@dataclass(frozen=True)
class VarianceContext:
    """True rates around one internal node.

    Attributes
    ----------
    A : float
        Pass rate of the path from the source to the node.
    gamma1 : ndarray
        ``gamma_j = A * beta_j``: rate at which descendant subtree ``j``
        observes a probe.
    order : int
        Index ``i`` of the composite estimator under study.
    alpha_bar : ndarray
        First-order loss of each descendant (the loss of its root link).
    s_k : float
        First-order loss of the path from the source to the node, the node's
        own link included.
    """

    A: float
    gamma1: np.ndarray
    order: int
    alpha_bar: np.ndarray
    s_k: float
    node: int | None = None
    children: tuple | None = None

    @classmethod
    def from_rates(cls, A, beta, order, alpha_bar=None, s_k=None, node=None):
        beta = np.asarray(beta, dtype=float)
        if alpha_bar is None:
            alpha_bar = 1.0 - beta
        if s_k is None:
            s_k = 1.0 - A
        return cls(float(A), A * beta, order, np.asarray(alpha_bar, dtype=float), float(s_k), node)

    @property
    def d(self) -> int:
        return len(self.gamma1)

    @cached_property
    def D_i(self) -> tuple:
        return masks_of_order(self.d, self.order)

    @cached_property
    def D_1(self) -> tuple:
        return tuple(1 << b for b in range(self.d))

    @property
    def keys(self) -> tuple:
        """Moment ordering used by gradients and covariance matrices."""
        return self.D_i + self.D_1

    def gamma(self, x) -> float:
        """``gamma_x = A * prod_{j in x} (gamma_j / A)``."""
        p = self.A
        for b in bits(_mask(x)):
            p *= self.gamma1[b] / self.A
        return p

    def t(self, x) -> float:
        return float(sum(self.alpha_bar[b] for b in bits(_mask(x))))

    def moments(self) -> np.ndarray:
        return np.array([self.gamma(m) for m in self.keys])

    def with_order(self, order: int) -> "VarianceContext":
        return VarianceContext(self.A, self.gamma1, order, self.alpha_bar, self.s_k, self.node,
                               self.children)

    def positions(self, subset) -> list[int]:
        """Descendant positions of ``subset``: child node ids when built from a tree."""
        if self.children is None:
            return list(subset)
        return [self.children.index(c) for c in subset]


def context_from_tree(t: Tree, k: int, order: int) -> VarianceContext:
    rates = path_rates(t)
    beta = subtree_pass_rates(t)
    alpha = t.alpha_array
    kids = list(t.children[k])
    A = rates.A[k]
    return VarianceContext(
        float(A),
        np.array([A * alpha[c] * beta[c] for c in kids]),
        order,
        np.array([1.0 - alpha[c] for c in kids]),
        # path loss through e_k; path_rates(t).s stops at the parent
        float(rates.s[k] + 1.0 - alpha[k]),
        node=k,
        children=tuple(kids),
    )


def symmetric_context(alpha: float, n_desc: int = 3, order: int = 2) -> VarianceContext:
    """Every link (path to the node and each leaf descendant) has pass rate ``alpha``."""
    return VarianceContext.from_rates(alpha, np.full(n_desc, alpha), order,
                                      alpha_bar=np.full(n_desc, 1.0 - alpha), s_k=1.0 - alpha)


# -- covariances ----------------------------------------------------------------

def exact_cov(x, y, ctx: VarianceContext) -> float:
    """Per-probe covariance of the indicators of ``x`` and ``y``."""
    x, y = _mask(x), _mask(y)
    if y & ~x == 0:
        return ctx.gamma(x) * (1.0 - ctx.gamma(y))
    if x & ~y == 0:
        return ctx.gamma(y) * (1.0 - ctx.gamma(x))
    return ctx.gamma(x | y) - ctx.gamma(x) * ctx.gamma(y)


def first_order_cov(x, y, ctx: VarianceContext) -> float:
    """Leading term of :func:`exact_cov` in the link loss rates."""
    x, y = _mask(x), _mask(y)
    if y & ~x == 0:
        return ctx.s_k + ctx.t(y)
    if x & ~y == 0:
        return ctx.s_k + ctx.t(x)
    return ctx.s_k + ctx.t(x & y)


def _extrapolated(x: int, y: int) -> bool:
    # nested pair with a multi-member proper subset: leading term s_k + t_sub is used
    sub, sup = (y, x) if y & ~x == 0 else (x, y)
    return sub & ~sup == 0 and sub != sup and popcount(sub) >= 2


def covariance_matrix(ctx: VarianceContext, mode: str = "exact", keys: Sequence[int] | None = None) -> np.ndarray:
    cov = {"exact": exact_cov, "first_order": first_order_cov}[mode]
    keys = ctx.keys if keys is None else keys
    C = np.empty((len(keys), len(keys)))
    for a, x in enumerate(keys):
        for b in range(a, len(keys)):
            C[a, b] = C[b, a] = cov(x, keys[b], ctx)
    return C


def first_order_excess(ctx: VarianceContext) -> np.ndarray:
    """The matrix ``M`` with ``C ~ s_k + M`` to first order."""
    return covariance_matrix(ctx, "first_order") - ctx.s_k


# -- gradients ----------------------------------------------------------------

def composite_from_moments(values: np.ndarray, ctx: VarianceContext) -> float:
    """``A(i)`` evaluated on a moment vector laid out as ``ctx.keys``."""
    i = ctx.order
    nd = len(ctx.D_i)
    g = values[nd:]
    num = sum(np.prod([g[b] for b in bits(m)]) for m in ctx.D_i)
    den = float(np.sum(values[:nd]))
    return (num / den) ** (1.0 / (i - 1))


def gradient(ctx: VarianceContext, values: np.ndarray | None = None) -> np.ndarray:
    """Analytic gradient of ``A(i)`` with respect to ``ctx.keys``.

    ``d/d gamma_x = -A(i) / ((i-1) de)`` for every ``x`` of order ``i``, and
    ``d/d gamma_j = A(i) no_j / ((i-1) gamma_j no)`` where ``no`` is the
    numerator sum and ``no_j`` its terms containing ``gamma_j``.
    """
    values = ctx.moments() if values is None else np.asarray(values, dtype=float)
    i = ctx.order
    nd = len(ctx.D_i)
    g = values[nd:]
    de = float(np.sum(values[:nd]))
    terms = {m: float(np.prod([g[b] for b in bits(m)])) for m in ctx.D_i}
    no = sum(terms.values())
    Ai = (no / de) ** (1.0 / (i - 1))
    out = np.empty(len(values))
    out[:nd] = -Ai / ((i - 1) * de)
    for b in range(ctx.d):
        no_j = sum(v for m, v in terms.items() if m >> b & 1)
        out[nd + b] = Ai * no_j / ((i - 1) * g[b] * no)
    return out


# -- variances ----------------------------------------------------------------

@dataclass
class VarianceReport:
    order: int
    gradient: np.ndarray
    C: np.ndarray
    v: float
    s_k: float
    mode: str
    flags: list = field(default_factory=list)

    @property
    def residual(self) -> float:
        return self.v - self.s_k

    # column aliases used by the report table
    @property
    def v_exact(self) -> float:
        return self.v if self.mode == "exact" else float("nan")

    @property
    def v_first_order(self) -> float:
        return self.s_k


def asymptotic_variance(ctx: VarianceContext, mode: str = "exact") -> VarianceReport:
    """``grad @ C @ grad`` for the ``ctx.order``-wise composite estimator."""
    grad = gradient(ctx)
    C = covariance_matrix(ctx, mode)
    flags = []
    if mode == "first_order" and any(_extrapolated(x, y) for x in ctx.keys for y in ctx.keys):
        flags.append("nested-multi-member-extrapolation")
    return VarianceReport(ctx.order, grad, C, float(grad @ C @ grad), ctx.s_k, mode, flags)


def full_likelihood_variance(ctx: VarianceContext) -> float:
    """Delta-method variance of the full-likelihood estimate.

    The estimate solves ``h(A; g_k, g_1..g_d) = 0``; the implicit function
    theorem gives ``dA/dv = -(dh/dv) / (dh/dA)`` on the moments
    ``v = (g_k, g_1..g_d)`` with ``g_k`` the confirmed-arrival rate.
    """
    A, g = ctx.A, ctx.gamma1
    r = 1.0 - g / A
    P = float(np.prod(r))
    gk = A * (1.0 - P)
    dh_dA = gk / A**2 - P * float(np.sum((g / A**2) / r))
    dh_dv = np.concatenate([[-1.0 / A], (P / r) / A])
    grad = -dh_dv / dh_dA
    C = np.empty((ctx.d + 1, ctx.d + 1))
    C[0, 0] = gk * (1 - gk)
    C[0, 1:] = C[1:, 0] = g * (1 - gk)
    for a in range(ctx.d):
        for b in range(ctx.d):
            C[1 + a, 1 + b] = exact_cov(1 << a, 1 << b, ctx)
    return float(grad @ C @ grad)


def local_variance(ctx: VarianceContext, x, rooted: bool = True) -> float:
    """Delta-method variance of the local ratio ``prod g_j / g_x``, or of its root."""
    m = _mask(x)
    size = popcount(m)
    keys = (m,) + tuple(1 << b for b in bits(m))
    lm = float(np.prod([ctx.gamma1[b] for b in bits(m)])) / ctx.gamma(m)
    grad = np.array([-lm / ctx.gamma(m)] + [lm / ctx.gamma1[b] for b in bits(m)])
    if rooted:
        grad *= lm ** (1.0 / (size - 1) - 1.0) / (size - 1)
    C = covariance_matrix(ctx, "exact", keys)
    return float(grad @ C @ grad)


def estimator_variance(ctx: VarianceContext, eid: EstimatorId) -> float:
    """Exact-mode asymptotic variance of ``n^(1/2) (A_hat - A)`` for supported estimators."""
    if eid.kind == "full":
        return full_likelihood_variance(ctx)
    if eid.kind in ("composite", "trimmed", "weighted"):
        return asymptotic_variance(ctx.with_order(eid.order)).v
    if eid.kind == "local":
        return local_variance(ctx, ctx.positions(eid.subset))
    raise ValueError(f"no variance formula for {eid.label}")


def fit_expansion(func: Callable[[float], float], grid: Sequence[float] | None = None,
                  degree: int = 4) -> np.ndarray:
    """Least-squares coefficients ``c_1..c_degree`` of ``func(a) ~ sum c_p a^p``.

    Used to read off the leading terms of a variance as a series in the link
    loss rate without symbolic algebra.
    """
    grid = np.linspace(0.002, 0.02, 10) if grid is None else np.asarray(grid, dtype=float)
    values = np.array([func(a) for a in grid])
    X = np.vander(grid, degree + 1, increasing=True)[:, 1:]
    # column scaling keeps the Vandermonde system well conditioned
    scale = np.abs(X).max(axis=0)
    coef, *_ = np.linalg.lstsq(X / scale, values, rcond=None)
    return coef / scale


# -- Monte Carlo check ----------------------------------------------------------

@dataclass
class EmpiricalVarianceReport:
    estimator: EstimatorId
    n: int
    reps: int
    estimates: np.ndarray
    v_exact: float
    s_k: float

    @property
    def n_var(self) -> float:
        return float(self.n * np.nanvar(self.estimates, ddof=1))

    @property
    def ratio(self) -> float:
        return self.n_var / self.v_exact if self.v_exact > 0 else float("nan")


def empirical_variance_check(t: Tree, k: int, estimator: EstimatorId | int, n: int, reps: int,
                             seed: int) -> EmpiricalVarianceReport:
    """Compare ``n * Var`` over ``reps`` simulated traces with the delta-method value.

    Replication ``r`` is simulated with seed ``(seed, r)``.
    """
    if reps < 100:
        raise ValueError(f"need at least 100 replications, got {reps}")
    eid = EstimatorId.composite(estimator) if isinstance(estimator, int) else estimator
    ctx = context_from_tree(t, k, eid.order or 2)
    v = estimator_variance(ctx, eid)
    est = np.empty(reps)
    for r in range(reps):
        stats = node_stats(simulate(t, n, (seed, r)), t, k)
        try:
            est[r] = run_estimator(stats, eid).value
        except TomographyError:
            est[r] = np.nan
    return EmpiricalVarianceReport(eid, n, reps, est, v, ctx.s_k)


def variance_table(rows: Sequence[tuple]) -> str:
    """Tab-separated export; rows are ``(i, v_exact, s_k, residual, empirical_ratio)``."""
    lines = ["i\tv_exact\ts_k\tresidual\tempirical_ratio"]
    for i, v, s, res, ratio in rows:
        lines.append(f"{i}\t{v:.10g}\t{s:.10g}\t{res:.10g}\t{ratio:.6g}")
    return "\n".join(lines) + "\n"
