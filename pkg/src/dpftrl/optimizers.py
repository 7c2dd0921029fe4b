"""DP-FTRL optimizers, a noisy-SGD baseline, and their shared argmin solvers.

Every DP-FTRL variant keeps a tree of clipped gradients and, after each step,
plays the minimizer of a linear term built from the noisy prefix sum plus an
l2 regularizer. The regularizer is anchored at `anchor` (zero until the first
tree restart, then the model at the restart), so the single-tree case is the
unanchored form.
"""

import math
from dataclasses import dataclass

import numpy as np

from dpftrl.primitives import InvalidInputError, as_vector, clip, norm, project_ball
from dpftrl.tree import HONAKER, AggregationTree

BASE = "ftrl"
MOMENTUM = "momentum"
COMPOSITE = "composite"
VARIANTS = (BASE, MOMENTUM, COMPOSITE)


class UnsupportedConfigurationError(ValueError):
    """The requested combination of options has no defined update."""


class IndefiniteSystemError(ArithmeticError):
    """2W + lambda I is not positive definite; increase lambda."""


# -- losses ------------------------------------------------------------------
# A datum of None is the null record: zero gradient, zero loss.

class LinearLoss:
    """l(theta; d) = <theta, d>."""

    def loss(self, theta, d):
        return 0.0 if d is None else float(np.dot(theta, d))

    def grad(self, theta, d):
        return np.zeros_like(theta) if d is None else np.asarray(d, dtype=np.float64).copy()


class SquaredLoss:
    """l(theta; (x, y)) = (y - <x, theta>)^2."""

    def loss(self, theta, d):
        if d is None:
            return 0.0
        x, y = d
        r = y - float(np.dot(x, theta))
        return r * r

    def grad(self, theta, d):
        if d is None:
            return np.zeros_like(theta)
        x, y = d
        return -2.0 * (y - float(np.dot(x, theta))) * np.asarray(x, dtype=np.float64)


class LogisticLoss:
    """l(theta; (x, y)) = log(1 + exp(-y <x, theta>)) with y in {-1, +1}."""

    def loss(self, theta, d):
        if d is None:
            return 0.0
        x, y = d
        return float(np.logaddexp(0.0, -y * np.dot(x, theta)))

    def grad(self, theta, d):
        if d is None:
            return np.zeros_like(theta)
        x, y = d
        margin = y * float(np.dot(x, theta))
        weight = 0.5 * (1.0 - math.tanh(0.5 * margin))  # sigmoid(-margin)
        return -y * weight * np.asarray(x, dtype=np.float64)


# -- argmin solvers ----------------------------------------------------------

def ftrl_argmin(s, lam, anchor=None, radius=None):
    """argmin_theta <s, theta> + lam/2 ||theta - anchor||^2 over the ball.

    The objective is lam/2 ||theta - (anchor - s/lam)||^2 + const, so the
    constrained minimizer is the Euclidean projection of the free one.
    """
    if not lam > 0:
        raise InvalidInputError(f"lambda must be positive, got {lam}")
    u = -np.asarray(s, dtype=np.float64) / lam
    if anchor is not None:
        u = u + anchor
    return u if radius is None else project_ball(u, radius)


def composite_argmin(s, lam, l1_total, anchor=None):
    """argmin <s, theta> + l1_total ||theta||_1 + lam/2 ||theta - anchor||^2."""
    if not lam > 0:
        raise InvalidInputError(f"lambda must be positive, got {lam}")
    z = -np.asarray(s, dtype=np.float64)
    if anchor is not None:
        z = z + lam * anchor
    return np.sign(z) * np.maximum(np.abs(z) - l1_total, 0.0) / lam


def ls_argmin(W, s, lam, radius=None, tol=1e-12):
    """argmin theta' W theta - 2 <s, theta> + lam/2 ||theta||^2 over the ball.

    Solves (2W + lam I) theta = 2s. With a ball constraint the multiplier nu
    of (2W + (lam + 2 nu) I) theta = 2s is found by bisection on ||theta(nu)||
    in the eigenbasis of W.
    """
    W = np.asarray(W, dtype=np.float64)
    W = 0.5 * (W + W.T)
    evals, Q = np.linalg.eigh(2.0 * W)
    curv = evals + lam
    if curv.min() <= 0:
        raise IndefiniteSystemError(
            f"2W + lambda I has eigenvalue {curv.min():.3g} <= 0; increase lambda "
            f"above {-evals.min():.3g}")
    b = Q.T @ (2.0 * np.asarray(s, dtype=np.float64))
    theta = Q @ (b / curv)
    if radius is None or norm(theta) <= radius:
        return theta

    def sized(nu):
        return norm(b / (curv + 2.0 * nu))

    lo, hi = 0.0, 1.0
    while sized(hi) > radius:
        hi *= 2.0
    while hi - lo > tol * max(hi, 1.0):
        mid = 0.5 * (lo + hi)
        if sized(mid) > radius:
            lo = mid
        else:
            hi = mid
    return Q @ (b / (curv + 2.0 * hi))


# -- optimizers --------------------------------------------------------------

@dataclass
class OptimizerConfig:
    """Hyperparameters shared by the DP-FTRL family.

    `sigma` is the noise multiplier relative to the per-step sensitivity
    clip_norm / batch_size, so node noise has std sigma * clip_norm / batch_size.
    `radius` None means the unconstrained domain.
    """

    lam: float
    momentum: float = 0.0
    clip_norm: float = 1.0
    sigma: float = 0.0
    radius: float | None = None
    l1: float = 0.0
    batch_size: int = 1
    estimator: str = HONAKER
    seed: int = 0

    def __post_init__(self):
        if not self.lam > 0:
            raise InvalidInputError(f"lambda must be positive, got {self.lam}")
        if not 0 <= self.momentum <= 1:
            raise InvalidInputError(f"momentum must lie in [0, 1], got {self.momentum}")
        if self.batch_size < 1:
            raise InvalidInputError(f"batch size must be >= 1, got {self.batch_size}")
        if self.l1 < 0:
            raise InvalidInputError(f"l1 weight must be non-negative, got {self.l1}")
        if self.radius is not None and not self.radius > 0:
            raise InvalidInputError(f"radius must be positive, got {self.radius}")

    @property
    def eta(self):
        return 1.0 / self.lam

    @property
    def tree_sigma(self):
        return self.sigma / self.batch_size


class DPFTRL:
    """DP-FTRL over a stream of gradients.

    Args:
      config: an `OptimizerConfig`.
      dim: model dimension p.
      n: steps covered by the first tree (later trees are sized by `restart`).
      variant: "ftrl", "momentum" or "composite".
    """

    def __init__(self, config, dim, n, variant=BASE):
        if variant not in VARIANTS:
            raise InvalidInputError(f"unknown variant {variant!r}")
        if variant == COMPOSITE and config.radius is not None:
            raise UnsupportedConfigurationError("l1 composite update is only defined unconstrained")
        self.config = config
        self.variant = variant
        self.dim = dim
        self.theta = np.zeros(dim)  # argmin of lam/2 ||theta||^2 over any ball
        self.anchor = np.zeros(dim)
        self.velocity = np.zeros(dim)
        self.t = 0
        self.block = 0
        self.block_steps = 0
        self.last_sum = np.zeros(dim)
        self.last_noise = np.zeros(dim)
        self.tree = self._new_tree(n)

    def _new_tree(self, n):
        c = self.config
        return AggregationTree(n, c.tree_sigma, c.clip_norm, self.dim, seed=c.seed,
                               mode=c.estimator, stream=self.block)

    def _solve(self, s):
        c = self.config
        anchor = self.anchor if self.block else None
        if self.variant == MOMENTUM:
            self.velocity = c.momentum * self.velocity + s
            return ftrl_argmin(self.velocity, c.lam, self.anchor, c.radius)
        if self.variant == COMPOSITE:
            return composite_argmin(s, c.lam, self.block_steps * c.l1, anchor)
        return ftrl_argmin(s, c.lam, anchor, c.radius)

    def step(self, gradient):
        """Clips, aggregates, and returns theta_{t+1}."""
        g = clip(as_vector(gradient, "gradient"), self.config.clip_norm)
        self.tree.add_to_tree(self.tree.leaf_count + 1, g)
        self.t += 1
        self.block_steps += 1
        est = self.tree.estimate()
        self.last_sum = est.value
        self.last_noise = est.value - self.tree.exact_sum()
        self.theta = self._solve(est.value)
        return self.theta

    def restart(self, n, complete=False):
        """Starts a fresh tree for the next `n` steps.

        With `complete`, the old tree is first padded with virtual zero steps to
        a power of two and the model is re-solved from the completed (lower
        noise) prefix sum. The resulting model anchors the new block.
        """
        if complete and self.tree.leaf_count:
            self.tree.complete_tree()
            s = self.tree.estimate().value
            if self.variant == MOMENTUM:
                # Virtual steps refresh the last noisy sum, not the momentum history.
                self.velocity = self.velocity - self.last_sum + s
                self.theta = ftrl_argmin(self.velocity, self.config.lam, self.anchor,
                                         self.config.radius)
            else:
                self.theta = self._solve(s)
        self.anchor = self.theta.copy()
        self.velocity = np.zeros(self.dim)
        self.block += 1
        self.block_steps = 0
        self.tree = self._new_tree(n)
        return self.tree


class DPFTRLLeastSquares:
    """DP-FTRL specialised to squared loss with a bias tree and a covariance tree.

    Requires ||x|| <= L and |y| <= 1. The covariance tree has clip norm L^2 and
    symmetric matrix noise.
    """

    def __init__(self, config, dim, n):
        c = config
        self.config = config
        self.dim = dim
        self.theta = np.zeros(dim)
        self.t = 0
        self.bias_tree = AggregationTree(n, c.sigma, c.clip_norm, dim, seed=c.seed,
                                         mode=c.estimator, stream=0)
        self.cov_tree = AggregationTree(n, c.sigma, c.clip_norm ** 2, (dim, dim), seed=c.seed,
                                        mode=c.estimator, symmetric=True, stream=1)

    def step(self, x, y):
        x = as_vector(x, "x")
        if norm(x) > self.config.clip_norm * (1 + 1e-9):
            raise InvalidInputError(f"||x|| = {norm(x)} exceeds L = {self.config.clip_norm}")
        if abs(y) > 1:
            raise InvalidInputError(f"|y| = {abs(y)} exceeds 1")
        t = self.t + 1
        self.bias_tree.add_to_tree(t, y * x)
        self.cov_tree.add_to_tree(t, np.outer(x, x))
        self.t = t
        s = self.bias_tree.estimate().value
        W = self.cov_tree.estimate().value
        self.theta = ls_argmin(W, s, self.config.lam, self.config.radius)
        return self.theta


def minibatch_gradient(batch, theta, loss, L, q):
    """Mean of per-example clipped gradients; short batches are padded with None."""
    if q < 1:
        raise InvalidInputError(f"batch size must be >= 1, got {q}")
    batch = list(batch)
    if len(batch) > q:
        raise InvalidInputError(f"batch has {len(batch)} > q={q} examples")
    total = np.zeros_like(np.asarray(theta, dtype=np.float64))
    for d in batch:
        if d is not None:
            total = total + clip(loss.grad(theta, d), L)
    return total / q


def noisy_sgd_step(theta, gradient, noise, eta):
    """theta - eta (gradient + noise)."""
    return np.asarray(theta, dtype=np.float64) - eta * (np.asarray(gradient) + np.asarray(noise))


def tree_noise_sequence(n, config, dim):
    """b_1..b_n of a zero-data tree with the config's seed and noise settings."""
    tree = AggregationTree(n, config.tree_sigma, config.clip_norm, dim, seed=config.seed,
                           mode=config.estimator)
    zero = np.zeros(dim)
    out = []
    for t in range(1, n + 1):
        tree.add_to_tree(t, zero)
        out.append(tree.estimate().value)
    return out


def equivalence_run(stream, loss, config, dim, eta=None):
    """Trajectories theta_1..theta_{n+1} of DP-FTRL and matched noisy SGD.

    SGD uses a_t = b_t - b_{t-1}, with b_t regenerated from the same seed on a
    zero-data tree, and step size `eta` (default 1 / lambda).
    """
    if config.radius is not None:
        raise UnsupportedConfigurationError("the SGD/FTRL identity holds only unconstrained")
    stream = list(stream)
    n = len(stream)
    eta = config.eta if eta is None else eta
    L = config.clip_norm

    opt = DPFTRL(config, dim, n)
    ftrl = [opt.theta.copy()]
    for d in stream:
        ftrl.append(opt.step(loss.grad(opt.theta, d)).copy())

    b = tree_noise_sequence(n, config, dim)
    theta = np.zeros(dim)
    sgd = [theta.copy()]
    prev = np.zeros(dim)
    for d, b_t in zip(stream, b):
        theta = noisy_sgd_step(theta, clip(loss.grad(theta, d), L), b_t - prev, eta)
        prev = b_t
        sgd.append(theta.copy())
    return np.array(ftrl), np.array(sgd)


def equivalence_check(stream, loss, config, dim, eta=None, relative=False):
    """max_t ||theta_t^SGD - theta_t^FTRL||, optionally over max_t ||theta_t^FTRL||."""
    ftrl, sgd = equivalence_run(stream, loss, config, dim, eta)
    dev = float(np.max(np.linalg.norm(ftrl - sgd, axis=1)))
    if relative:
        scale = float(np.max(np.linalg.norm(ftrl, axis=1)))
        return dev / scale if scale > 0 else dev
    return dev
