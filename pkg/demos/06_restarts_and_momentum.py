"""
Multiple epochs: restarts, tree completion and momentum
=======================================================

Four epochs of minibatch training on a regression stream. Each restart
block gets a new tree; completing the old tree before restarting trades
a larger sensitivity for a less noisy anchor.
"""

from dpftrl.harness import SyntheticStream, gen_stream, run_online
from dpftrl.optimizers import OptimizerConfig

data = gen_stream(SyntheticStream(p=8, n=600, seed=3))
base = dict(lam=30.0, sigma=1.0, batch_size=50, seed=1)

for label, variant, extra, schedule in [
    ("single tree", "ftrl", {}, dict()),
    ("restart/2 epochs", "ftrl", {}, dict(restart_every=2)),
    ("restart + completion", "ftrl", {}, dict(restart_every=2, complete_tree=True)),
    ("momentum 0.9", "ftrlm", {"momentum": 0.9}, dict(restart_every=2, complete_tree=True)),
    ("noisy SGD", "sgd", {"lam": 100.0}, dict()),
]:
    cfg = OptimizerConfig(**{**base, **extra})
    res = run_online(data, variant, cfg, task="linreg", epochs=4, **schedule)
    print(f"{label:22s} regret={res.record.regret:.4f}  eps={res.epsilons[-1]:.2f}")

res = run_online(data, "ftrl", OptimizerConfig(**base), task="linreg", epochs=4, restart_every=2,
                 complete_tree=True)
print("first block order:", res.block_orders[0])
