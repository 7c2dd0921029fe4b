"""
Least squares with two trees, and l1-regularized updates
========================================================
"""

import numpy as np

from dpftrl.harness import SyntheticStream, excess_risk, gen_stream, run_online
from dpftrl.optimizers import IndefiniteSystemError, OptimizerConfig, composite_argmin

spec = SyntheticStream(p=4, n=2000, seed=5)
data = gen_stream(spec)
heldout = gen_stream(SyntheticStream(p=4, n=5000, seed=6, theta_star=spec.theta_star))

for lam in (5.0, 50.0, 500.0):
    try:
        res = run_online(data, "ls", OptimizerConfig(lam=lam, sigma=1.0, radius=1.0), task="linreg")
    except IndefiniteSystemError as e:
        print(f"lambda={lam}: {e}")
        continue
    risk = excess_risk(res.record.theta_bar, heldout, spec.loss, spec.theta_star)
    print(f"lambda={lam}: regret={res.record.regret:.4f} excess risk of average={risk:.4f}")

# Soft thresholding: coordinates with |s| below the l1 weight stay at zero
s = np.array([0.3, -2.0, 0.9, 1.5])
print(composite_argmin(s, lam=1.0, l1_total=1.0))

res = run_online(data, "composite", OptimizerConfig(lam=40.0, l1=0.05, sigma=0.5), task="linreg")
print("zeros in final model:", int(np.sum(res.trajectory[-1] == 0)))
