"""
DP-FTRL as noisy SGD with correlated noise
==========================================

Unconstrained DP-FTRL with step 1/lambda walks exactly the same path as
SGD whose per-step noise is the difference of consecutive tree estimates.
"""

import numpy as np

from dpftrl.harness import SyntheticStream, gen_stream
from dpftrl.optimizers import OptimizerConfig, equivalence_run, tree_noise_sequence

spec = SyntheticStream(p=10, n=100, seed=0)
data = gen_stream(spec)
config = OptimizerConfig(lam=20.0, sigma=1.0, seed=7)

ftrl, sgd = equivalence_run(data, spec.loss, config, spec.p)
print("max |ftrl - sgd|:", np.abs(ftrl - sgd).max())

# The SGD noise terms are increments of the tree's noise; their partial sums
# have logarithmic, not linear, growth in variance.
b = np.array(tree_noise_sequence(100, config, 10))
a = np.diff(np.vstack([np.zeros(10), b]), axis=0)
print("var of cumulative noise at t=100:", float(b[-1].var()))
print("sum of per-step noise variances:", float((a ** 2).sum() / 10))
