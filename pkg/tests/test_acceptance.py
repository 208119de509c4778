"""Acceptance criteria, one test each; the terminal summary lists PASS/FAIL per criterion."""
import math
import time

import numpy as np
from hypothesis import given, settings, strategies as st

from losstomo.estimators import EstimatorId, composite, full_mle, grouped, local, local_ratios
from losstomo.estimators import correspondence_residual
from losstomo.experiment import ExperimentConfig, preset, run_experiment
from losstomo.simulate import ProbeTrace, simulate
from losstomo.stats import classify_validity, confirmed_arrivals, node_stats
from losstomo.estimators import estimate_node
from losstomo.tree import random_tree, star_tree
from losstomo.variance import (VarianceContext, asymptotic_variance, composite_from_moments,
                               empirical_variance_check, fit_expansion, full_likelihood_variance, gradient,
                               symmetric_context)

from oracles import grid_root, likelihood_h


def test_ac1_table_one_regime():
    t, suite = preset("uniform")
    start = time.perf_counter()
    res = run_experiment(ExperimentConfig(t, [9900], 20, suite, seed=2024))
    elapsed = time.perf_counter() - start
    for c in res.cells:
        assert c.n_valid == 20
        assert 0.0085 <= c.mean <= 0.0115, (c.estimator.label, c.mean)
        assert 2e-7 <= c.var <= 3e-6, (c.estimator.label, c.var)
    assert elapsed < 30


def test_ac2_expansion_coefficients():
    start = time.perf_counter()
    cases = [
        (lambda ab: asymptotic_variance(symmetric_context(1 - ab, 3, 2)).v, -2 / 3),
        (lambda ab: asymptotic_variance(symmetric_context(1 - ab, 3, 3)).v, -1 / 4),
        (lambda ab: full_likelihood_variance(symmetric_context(1 - ab, 3, 2)), -1.0),
    ]
    for func, second in cases:
        c = fit_expansion(func)
        assert abs(c[0] - 1.0) <= 0.05
        assert abs(c[1] - second) <= 0.05 * abs(second)
    assert time.perf_counter() - start < 5


def test_ac3_two_descendant_oracle():
    rng = np.random.default_rng(3)
    for seed in range(20):
        t = star_tree(rng.uniform(0.6, 0.99, 2), rng.uniform(0.6, 0.99))
        stats = node_stats(simulate(t, int(rng.integers(200, 5000)), seed), t, 1)
        oracle = grid_root(likelihood_h(stats.gamma_k_hat, stats.gamma_vector), stats.gamma_k_hat, 1.0, 1e-6)
        values = [full_mle(stats).raw, composite(stats, 2).raw, local(stats, (2, 3)).raw,
                  grouped(stats, [2], [3]).raw]
        assert max(values) - min(values) < 1e-5
        assert all(abs(v - oracle) < 1e-5 for v in values)


def test_ac4_identities_on_random_trees():
    rng = np.random.default_rng(4)
    checked = 0
    for seed in range(100):
        t = random_tree(rng, alpha_range=(0.7, 1.0))
        tr = simulate(t, int(rng.integers(100, 2000)), (4, seed))
        for k in t.internal_nodes:
            stats = node_stats(tr, t, k)
            assert confirmed_arrivals(stats) == stats.n_k1_direct
            if classify_validity(stats).full_valid:
                assert abs(correspondence_residual(stats, full_mle(stats).raw)) < 1e-10
                checked += 1
    assert checked >= 100


def test_ac5_unbiasedness(table1_tree):
    reps, n = 1000, 10_000
    est = {i: np.empty(reps) for i in (2, 3, 8)}
    for r in range(reps):
        stats = node_stats(simulate(table1_tree, n, (5, r)), table1_tree, 1)
        for i in est:
            est[i][r] = composite(stats, i).raw
    for i, v in est.items():
        se = v.std(ddof=1) / math.sqrt(reps)
        assert abs(v.mean() - 0.99) < 3 * se, (i, v.mean(), se)


def test_ac6_empirical_vs_asymptotic_variance():
    t = star_tree([0.99] * 3, 0.99)
    for i in (2, 3):
        rep = empirical_variance_check(t, 1, i, 100_000, 500, 6)
        assert 0.85 <= rep.ratio <= 1.15, (i, rep.ratio)


def test_ac7_forced_zero_triple():
    t = star_tree([0.9, 0.9, 0.9], 0.9)
    Y = simulate(t, 2000, 7).Y.copy()
    Y[:, 2] &= ~(Y[:, 0] & Y[:, 1])
    stats = node_stats(ProbeTrace(Y, t.receivers), t, 1)
    report = classify_validity(stats)
    assert 2 in report.valid_indices and 3 not in report.valid_indices
    assert report.zero_sets == [(2, 3, 4)]
    ne = estimate_node(stats)
    assert ne.selected == EstimatorId.composite(2)
    ne = estimate_node(stats, EstimatorId.full())
    assert ne.selected == EstimatorId.composite(2) and "fallback:composite(2)" in ne.flags


def test_ac8_gradient_finite_differences():
    rng = np.random.default_rng(8)
    h = 1e-6
    for _ in range(50):
        d = int(rng.integers(2, 7))
        ctx = VarianceContext.from_rates(rng.uniform(0.9, 1.0), rng.uniform(0.9, 1.0, d), int(rng.integers(2, d + 1)))
        v = ctx.moments()
        g = gradient(ctx, v)
        for j in range(len(v)):
            e = np.zeros(len(v))
            e[j] = h
            fd = (composite_from_moments(v + e, ctx) - composite_from_moments(v - e, ctx)) / (2 * h)
            assert abs(g[j] - fd) <= 1e-5 * abs(g[j])


@settings(max_examples=1000, deadline=None, derandomize=True)
@given(d=st.integers(2, 6), n=st.integers(20, 800), seed=st.integers(0, 2**32 - 1),
       root=st.floats(0.5, 1.0), leaf=st.floats(0.4, 1.0))
def test_ac9_power_mean_bracketing(d, n, seed, root, leaf):
    rng = np.random.default_rng(seed)
    t = star_tree(np.clip(leaf + rng.uniform(-0.1, 0.1, d), 0.05, 1.0), root)
    stats = node_stats(simulate(t, n, seed), t, 1)
    for i in classify_validity(stats).valid_indices:
        roots = local_ratios(stats, i) ** (1.0 / (i - 1))
        A = composite(stats, i).raw
        assert roots.min() * (1 - 1e-12) <= A <= roots.max() * (1 + 1e-12)
