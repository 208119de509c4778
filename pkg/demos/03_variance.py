"""
Asymptotic variance of the composite estimators
===============================================

Three descendants, every link with the same pass rate.  The delta-method
variance of each estimator is close to the path loss rate, and the
second-order term separates them.
"""
from losstomo import asymptotic_variance, fit_expansion, full_likelihood_variance, symmetric_context
from losstomo import empirical_variance_check, star_tree

for label, func in [
    ("pairwise", lambda ab: asymptotic_variance(symmetric_context(1 - ab, 3, 2)).v),
    ("triple", lambda ab: asymptotic_variance(symmetric_context(1 - ab, 3, 3)).v),
    ("full likelihood", lambda ab: full_likelihood_variance(symmetric_context(1 - ab, 3, 2))),
]:
    c = fit_expansion(func)
    print(f"{label:16s} v = {c[0]:.4f} a + ({c[1]:.4f}) a^2 + ...")

# %%
# A Monte Carlo check of the pairwise estimator at a moderate sample size.
rep = empirical_variance_check(star_tree([0.99] * 3, 0.99), 1, 2, n=20_000, reps=200, seed=0)
print(f"n*Var = {rep.n_var:.5f}   delta method = {rep.v_exact:.5f}   ratio = {rep.ratio:.3f}")
