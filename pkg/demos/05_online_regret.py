"""
Regret of DP-FTRL on linear losses
==================================

Average regret against the best point of the unit ball, for several stream
lengths and privacy levels, next to the theoretical bound for sigma = 0.
"""

import math

import numpy as np

from dpftrl.harness import BoundParams, SyntheticStream, gen_stream, regret_bound_general, run_online
from dpftrl.optimizers import OptimizerConfig

p = 5
for sigma in (0.0, 1.0, 4.0):
    row = []
    for n in (100, 1000, 5000):
        regrets = []
        for seed in range(5):
            data = gen_stream(SyntheticStream(p=p, n=n, task="linear", seed=seed))
            cfg = OptimizerConfig(lam=(1 + sigma) * math.sqrt(n), sigma=sigma, radius=1.0, seed=seed)
            regrets.append(run_online(data, "ftrl", cfg, task="linear").record.regret)
        row.append(np.mean(regrets))
    print(f"sigma={sigma}: " + "  ".join(f"{r:.4f}" for r in row))

n = 1000
print("bound at sigma=0, n=1000:",
      regret_bound_general(BoundParams(L=1, lam=math.sqrt(n), sigma=0, n=n, p=p, theta_star_norm=1)))

# Privacy spent along the way, for a noisy run
data = gen_stream(SyntheticStream(p=p, n=n, task="linear", seed=0))
res = run_online(data, "ftrl", OptimizerConfig(lam=2 * math.sqrt(n), sigma=2.0, radius=1.0), task="linear")
print("epsilon after 10, 100, 1000 steps:", res.epsilons[[9, 99, 999]].round(3))
