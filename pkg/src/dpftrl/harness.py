"""Synthetic streams, online training loops, regret metrics and noise tables."""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from dpftrl.optimizers import (
    BASE, COMPOSITE, DPFTRL, MOMENTUM, DPFTRLLeastSquares, LinearLoss, LogisticLoss,
    OptimizerConfig, SquaredLoss, ls_argmin, minibatch_gradient, noisy_sgd_step,
)
from dpftrl.primitives import InvalidInputError, NoiseSource, clip, gaussian_sample, norm, project_ball
from dpftrl.privacy import VIRTUAL, SensitivityTracker, epsilon_for
from dpftrl.tree import HONAKER, VANILLA, capacity_for, ceil_lg, noise_variance_multiplier

LINREG = "linreg"
LOGISTIC = "logistic"
LINEAR = "linear"
TASKS = (LINREG, LOGISTIC, LINEAR)

# Variant names as exposed by the CLI.
FTRL, FTRLM, COMPOSITE_V, LS, SGD = "ftrl", "ftrlm", "composite", "ls", "sgd"
RUN_VARIANTS = (FTRL, FTRLM, COMPOSITE_V, LS, SGD)
_OPT_VARIANT = {FTRL: BASE, FTRLM: MOMENTUM, COMPOSITE_V: COMPOSITE}

LOSSES = {LINREG: SquaredLoss(), LOGISTIC: LogisticLoss(), LINEAR: LinearLoss()}

CSV_DIGITS = 12


@dataclass
class SyntheticStream:
    """Recipe for a reproducible synthetic data stream.

    `theta_star` defaults to a seeded random vector of norm 0.5. For the
    linear task it is the mean of the loss vectors before noise.
    """

    p: int
    n: int
    task: str = LINREG
    L: float = 1.0
    noise: float = 0.1
    seed: int = 0
    theta_star: np.ndarray | None = None

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise InvalidInputError(f"need n, p >= 1; got n={self.n}, p={self.p}")
        if self.task not in TASKS:
            raise InvalidInputError(f"unknown task {self.task!r}")
        rng = np.random.default_rng([self.seed, 1])
        if self.theta_star is None:
            v = rng.standard_normal(self.p)
            self.theta_star = 0.5 * v / norm(v)
        self.theta_star = np.asarray(self.theta_star, dtype=np.float64)
        if self.theta_star.shape != (self.p,):
            raise InvalidInputError("theta_star has the wrong dimension")

    @property
    def loss(self):
        return LOSSES[self.task]


def gen_stream(spec):
    """Materializes the stream: (x, y) tuples, or loss vectors for `linear`."""
    rng = np.random.default_rng([spec.seed, 2])
    g = rng.standard_normal((spec.n, spec.p))
    # Directions uniform on the sphere, radii uniform in [0, L].
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    X = g * (spec.L * rng.uniform(0.0, 1.0, size=(spec.n, 1)))
    eps = rng.standard_normal(spec.n)
    if spec.task == LINEAR:
        noise = rng.standard_normal((spec.n, spec.p)) / math.sqrt(spec.p)
        return [project_ball(spec.theta_star + spec.noise * z, spec.L) for z in noise]
    margins = X @ spec.theta_star
    if spec.task == LINREG:
        y = np.clip(margins + spec.noise * eps, -1.0, 1.0)
    else:
        if spec.noise == 0:
            y = np.where(margins >= 0, 1.0, -1.0)
        else:
            prob = 1.0 / (1.0 + np.exp(-margins / spec.noise))
            y = np.where(rng.uniform(size=spec.n) < prob, 1.0, -1.0)
    return [(X[i], float(y[i])) for i in range(spec.n)]


# -- metrics -------------------------------------------------------------------

def item_loss(loss, theta, item):
    """Loss of one played item: a datum, or the mean over a list (minibatch)."""
    if isinstance(item, list):
        return sum(loss.loss(theta, d) for d in item) / len(item)
    return loss.loss(theta, item)


def compute_regret(trajectory, data, comparator, loss):
    """(1/n) sum_t l(theta_t; d_t) - (1/n) sum_t l(comparator; d_t)."""
    if len(trajectory) != len(data):
        raise InvalidInputError(f"trajectory has {len(trajectory)} models for {len(data)} items")
    n = len(data)
    total = 0.0
    for theta, d in zip(trajectory, data):
        total += item_loss(loss, theta, d) - item_loss(loss, comparator, d)
    return total / n


def online_to_batch(trajectory):
    """Coordinate-wise mean of the played models."""
    trajectory = np.asarray(trajectory, dtype=np.float64)
    if len(trajectory) == 0:
        raise InvalidInputError("empty trajectory")
    return trajectory.mean(axis=0)


def population_loss(theta, data, loss):
    return sum(loss.loss(theta, d) for d in data) / len(data)


def excess_risk(theta, heldout, loss, optimum):
    """Held-out estimate of E l(theta; d) - E l(optimum; d)."""
    return population_loss(theta, heldout, loss) - population_loss(optimum, heldout, loss)


def _flatten(data):
    out = []
    for item in data:
        out.extend(item if isinstance(item, list) else [item])
    return out


def best_comparator(data, task, radius=None):
    """A fixed comparator for the played data.

    linear: best point of the radius ball in hindsight (radius required).
    linreg: least-squares fit, restricted to the ball if given.
    logistic: not closed form; callers pass the ground truth instead.
    """
    flat = [d for d in _flatten(data) if d is not None]
    if task == LINEAR:
        if radius is None:
            raise InvalidInputError("linear losses need a bounded domain for a comparator")
        total = np.sum(flat, axis=0)
        n = norm(total)
        return np.zeros_like(total) if n == 0 else -radius * total / n
    if task == LINREG:
        X = np.array([x for x, _ in flat])
        y = np.array([v for _, v in flat])
        if radius is None:
            return np.linalg.lstsq(X, y, rcond=None)[0]
        return ls_argmin(X.T @ X, X.T @ y, 1e-12, radius)
    raise InvalidInputError(f"no closed-form comparator for task {task!r}")


# -- bounds --------------------------------------------------------------------

@dataclass
class BoundParams:
    L: float
    lam: float
    sigma: float
    n: int
    p: int
    theta_star_norm: float
    beta: float = 0.05
    theta1_norm: float = 0.0

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise InvalidInputError(f"beta must lie in (0, 1), got {self.beta}")


def regret_bound_general(b, l1_term=0.0):
    """High-probability regret bound of DP-FTRL before tuning lambda.

    (L sigma sqrt(p ceil(lg n) ln(n/beta)) + L^2) / lam
        + lam/(2n) (||theta*||^2 - ||theta_1||^2) + l1_term,
    where `l1_term` is (1/n) sum_t r_t(theta*) for composite losses.
    """
    noise = b.L * b.sigma * math.sqrt(b.p * ceil_lg(b.n) * math.log(b.n / b.beta))
    return ((noise + b.L ** 2) / b.lam
            + b.lam / (2 * b.n) * (b.theta_star_norm ** 2 - b.theta1_norm ** 2)
            + l1_term)


# -- online training -------------------------------------------------------------

@dataclass
class RegretRecord:
    losses: np.ndarray
    comparator_losses: np.ndarray
    comparator: np.ndarray
    regret: float
    theta_bar: np.ndarray

    @property
    def running_regret(self):
        diff = np.cumsum(self.losses - self.comparator_losses)
        return diff / np.arange(1, len(diff) + 1)


@dataclass
class RunResult:
    trajectory: np.ndarray  # theta_t played on item t
    played: list  # the item consumed at each step
    record: RegretRecord
    epsilons: np.ndarray  # (eps, delta)-DP spent after each step
    block_orders: list = field(default_factory=list)

    @property
    def participation_order(self):
        return [tok for block in self.block_orders for tok in block]


def _batches(n, q):
    return [list(range(i, min(i + q, n))) for i in range(0, n, q)]


def run_online(stream, variant, config, *, task=None, loss=None, epochs=1, restart_every=None,
               complete_tree=False, delta=1e-5, comparator=None, dim=None):
    """Runs one optimizer over `epochs` passes of `stream`.

    Batches of `config.batch_size` consecutive examples are fixed within a
    restart block and visited in the same order every epoch; the example
    order is reshuffled (seeded) at each restart. Each model is recorded
    before its item is consumed.

    Args:
      stream: list of data items from `gen_stream`.
      variant: one of "ftrl", "ftrlm", "composite", "ls", "sgd".
      config: an `OptimizerConfig`.
      task: task name, used for the default loss and comparator.
      loss: loss oracle; defaults from `task`.
      epochs: passes over the data.
      restart_every: epochs per tree; None keeps a single tree.
      complete_tree: pad each finished tree with virtual steps at restart.
      delta: delta for the per-step epsilon column.
      comparator: fixed comparator; defaults to `best_comparator` (or the
        supplied ground truth for logistic tasks, via `comparator`).
      dim: model dimension; inferred from the data when omitted.

    Returns:
      A `RunResult`.
    """
    if variant not in RUN_VARIANTS:
        raise InvalidInputError(f"unknown variant {variant!r}")
    if loss is None:
        if task is None:
            raise InvalidInputError("need a task or a loss")
        loss = LOSSES[task]
    stream = list(stream)
    n = len(stream)
    if n == 0:
        raise InvalidInputError("empty stream")
    sample = stream[0][0] if isinstance(stream[0], tuple) else stream[0]
    inferred = len(np.asarray(sample))
    dim = inferred if dim is None else dim
    if dim != inferred:
        raise InvalidInputError(f"data dimension {inferred} != model dimension {dim}")
    if variant == LS and (epochs != 1 or restart_every):
        raise InvalidInputError("the least-squares variant runs a single pass")
    if variant == LS and config.batch_size != 1:
        raise InvalidInputError("the least-squares variant takes one example per step")

    q = config.batch_size
    per_epoch = math.ceil(n / q)
    block_epochs = restart_every or epochs
    block_sizes = [min(block_epochs, epochs - e) for e in range(0, epochs, block_epochs)]

    if variant == LS:
        opt = DPFTRLLeastSquares(config, dim, n)
    elif variant == SGD:
        opt = None
        noise_src = NoiseSource(config.seed, 99)
    else:
        opt = DPFTRL(config, dim, block_sizes[0] * per_epoch, _OPT_VARIANT[variant])

    shuffle_rng = np.random.default_rng([config.seed, 3])
    order = np.arange(n)
    theta = np.zeros(dim)
    trajectory, played, eps, block_orders = [], [], [], []
    spent_zeta = 0.0
    eps_cache = {}
    sgd_counts = np.zeros(per_epoch)
    step = 0
    for b, block_len in enumerate(block_sizes):
        if b > 0:
            shuffle_rng.shuffle(order)
            if opt is not None:
                opt.restart(block_len * per_epoch, complete=complete_tree)
                theta = opt.theta.copy()
        batches = [[stream[i] for i in order[idx]] for idx in _batches(n, q)]
        tracker = SensitivityTracker()
        block_order = []
        block_orders.append(block_order)
        for _ in range(block_len):
            for bid, batch in enumerate(batches, start=1):
                item = batch if q > 1 else batch[0]
                trajectory.append(theta.copy())
                played.append(item)
                step += 1
                block_order.append(bid)
                if variant == LS:
                    theta = opt.step(*item).copy()
                    total = 2.0 * tracker.append(bid)
                elif variant == SGD:
                    g = minibatch_gradient(batch, theta, loss, config.clip_norm, q)
                    a = gaussian_sample(noise_src, step, dim, config.sigma * config.clip_norm / q)
                    theta = noisy_sgd_step(theta, g, a, config.eta)
                    if config.radius is not None:
                        theta = project_ball(theta, config.radius)
                    sgd_counts[bid - 1] += 1
                    total = float(sgd_counts.max())
                else:
                    g = minibatch_gradient(batch, theta, loss, config.clip_norm, q)
                    theta = opt.step(g).copy()
                    total = spent_zeta + tracker.append(bid)
                if total not in eps_cache:
                    eps_cache[total] = epsilon_for(total, config.sigma, delta)
                eps.append(eps_cache[total])
        if complete_tree and isinstance(opt, DPFTRL) and b + 1 < len(block_sizes):
            # Virtual steps appended by the coming restart still count for this tree.
            pad = opt.tree.capacity - opt.tree.leaf_count
            for _ in range(pad):
                tracker.append(VIRTUAL)
            block_order.extend([VIRTUAL] * pad)
        spent_zeta += tracker.zeta

    trajectory = np.array(trajectory)
    if comparator is None:
        task_name = task or next(k for k, v in LOSSES.items() if v is loss)
        comparator = best_comparator(played, task_name, config.radius)
    comparator = np.asarray(comparator, dtype=np.float64)
    alg = np.array([item_loss(loss, th, d) for th, d in zip(trajectory, played)])
    ref = np.array([item_loss(loss, comparator, d) for d in played])
    record = RegretRecord(alg, ref, comparator, float(np.mean(alg - ref)),
                          online_to_batch(trajectory))
    return RunResult(trajectory, played, record, np.array(eps), block_orders)


def tuning_grid(lo=-2, hi=4):
    """{1, 2, 5} x 10^i for i in [lo, hi)."""
    return [m * 10.0 ** i for i in range(lo, hi) for m in (1, 2, 5)]


def tune_lambda(stream, variant, config, grid=None, **kwargs):
    """Runs every lambda in `grid` and keeps the one with the lowest final regret."""
    grid = tuning_grid() if grid is None else grid
    best = None
    for lam in grid:
        cfg = replace(config, lam=lam)
        result = run_online(stream, variant, cfg, **kwargs)
        if best is None or result.record.regret < best[1].record.regret:
            best = (lam, result)
    return best


# -- CSV output ------------------------------------------------------------------

def fmt(x):
    return f"{x:.{CSV_DIGITS}g}"


def write_csv(path, header, rows, comment=None):
    with open(path, "w", newline="") as f:
        if comment:
            f.write(f"# {comment}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, float) else v for v in row])


def noise_table_rows(n, sigma):
    capacity = capacity_for(n)
    rows = []
    for t in range(1, n + 1):
        nu_v = noise_variance_multiplier(t, capacity, VANILLA)
        nu_h = noise_variance_multiplier(t, capacity, HONAKER)
        rows.append((t, nu_v, nu_h, sigma * math.sqrt(nu_v), sigma * math.sqrt(nu_h),
                     sigma * math.sqrt(t)))
    return rows


NOISE_TABLE_HEADER = ["t", "vanilla_nu", "honaker_nu", "ftrl_std_vanilla", "ftrl_std_honaker",
                      "sgd_std"]
NOISE_TABLE_COMMENT = ("std columns in units of eta*L; sgd_std is unamplified noisy SGD "
                       "with the same sigma per step (no sampling or shuffling amplification)")


def noise_table(n, sigma, path):
    """Writes per-step noise multipliers and cumulative noise std to CSV."""
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    rows = noise_table_rows(n, sigma)
    write_csv(path, NOISE_TABLE_HEADER, rows, NOISE_TABLE_COMMENT)
    return rows


def write_run_csv(path, result):
    rr = result.record.running_regret
    rows = [(t, float(result.record.losses[t - 1]), float(rr[t - 1]), float(result.epsilons[t - 1]))
            for t in range(1, len(rr) + 1)]
    write_csv(path, ["t", "loss", "regret", "epsilon"], rows)
    return rows


__all__ = [
    "SyntheticStream", "gen_stream", "run_online", "compute_regret", "online_to_batch",
    "excess_risk", "best_comparator", "BoundParams", "regret_bound_general", "noise_table",
    "RegretRecord", "RunResult", "tune_lambda", "tuning_grid", "write_run_csv", "clip",
]
