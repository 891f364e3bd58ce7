"""The statistical building blocks on small, checkable inputs."""

import numpy as np

from polarlens import bootstrap_median_bca, dip_statistic, dip_test, gini, ks_two_sample, wilcoxon_rank_sum

# Gini: one active category out of four is as concentrated as four bins allow
print("gini(1,0,0,0) =", gini([1, 0, 0, 0]))
print("gini(5,5,5,5) =", gini([5, 5, 5, 5]))
print("gini(3,0,1,7,2,0) =", gini([3, 0, 1, 7, 2, 0]))

# dip: two atoms are maximally bimodal for n = 2, a grid approaches uniform
print("dip({0,1}) =", dip_statistic([0, 1]))
print("dip(0..9) =", dip_statistic(np.arange(10)), "(1/(2n) = 0.05)")

rng = np.random.default_rng(0)
normal = rng.standard_normal(1000)
mixture = np.concatenate([rng.normal(-2, 0.6, 500), rng.normal(2, 0.6, 500)])
for name, x in (("normal", normal), ("mixture", mixture)):
    r = dip_test(x, n_boot=1000, seed=1)
    print(f"{name:8s} D = {r.D:.4f}  p = {r.p_value:.3f}")

# two-sample tests on a shifted lognormal
a = rng.lognormal(3.0, 1.0, 120)
b = rng.lognormal(3.4, 1.0, 90)
print("KS      ", ks_two_sample(a, b))
print("Wilcoxon", wilcoxon_rank_sum(a, b))

# BCa interval for a median
est = bootstrap_median_bca(a, n_boot=10_000, seed=2)
print(f"median {est.point:.2f}, 95% BCa [{est.ci_low:.2f}, {est.ci_high:.2f}]")
