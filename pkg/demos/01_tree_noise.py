"""
Noisy prefix sums from a tree
=============================

Feed a stream of zero gradients into a 32-leaf tree and look at how much
noise each prefix-sum estimate carries, for the plain estimator and the
reduced-variance one.
"""

import numpy as np

from dpftrl.tree import HONAKER, VANILLA, AggregationTree, noise_variance_multiplier

# Analytic variance multipliers (units of (sigma L)^2 per coordinate)
for t in (1, 8, 25, 31, 32):
    print(f"t={t:2d}  vanilla={noise_variance_multiplier(t, 32, VANILLA):.0f}"
          f"  reduced={noise_variance_multiplier(t, 32, HONAKER):.4f}")

# Empirical check: many seeds, many coordinates
draws = {VANILLA: [], HONAKER: []}
for seed in range(300):
    tree = AggregationTree(32, sigma=1.0, L=1.0, dim=50, seed=seed)
    for t in range(1, 26):
        tree.add_to_tree(t, np.zeros(50))
    draws[VANILLA].append(tree.get_sum(25).value)
    draws[HONAKER].append(tree.get_sum_reduced_variance(25).value)

print("empirical variance at t=25:",
      {k: round(float(np.var(v)), 3) for k, v in draws.items()})

# With sigma = 0 the estimates are exact prefix sums
rng = np.random.default_rng(0)
g = rng.uniform(-1, 1, size=(20, 3)) / 2
tree = AggregationTree(20, sigma=0.0, L=1.0, dim=3)
for t, v in enumerate(g, 1):
    tree.add_to_tree(t, v)
print("noiseless error:", np.abs(tree.estimate().value - g.sum(axis=0)).max())

# Padding a partial tree with virtual zero leaves drops the noise at the last step
tree = AggregationTree(25, sigma=1.0, L=1.0, dim=1)
for t in range(1, 26):
    tree.add_to_tree(t, np.zeros(1))
print("before completion:", tree.estimate().variance_multiplier)
tree.complete_tree()
print("after completion: ", tree.estimate().variance_multiplier)
