"""Binary-tree aggregation of a gradient stream into noisy prefix sums.

Leaves are 1-based. Nodes are addressed by heap index: the root is 1, the
children of node `i` are `2i` and `2i + 1`, and leaf `t` of a tree with
`capacity` leaves is node `capacity + t - 1`. Every node carries the exact sum
of the leaves below it plus one Gaussian draw of std `sigma * L` that is
derived from (seed, node index) on first use.

Two estimators are available for the prefix sum up to leaf `t`. The vanilla
one adds the `popcount(t)` maximal complete subtrees covering leaves 1..t. The
reduced-variance one replaces each of those subtree values by a weighted
combination of every node inside the subtree, which is unbiased and has
per-coordinate variance `1 / (2 - 1/m)` (in units of (sigma L)^2) for a
subtree with `m` leaves.
"""

from dataclasses import dataclass

import numpy as np

from dpftrl.primitives import InvalidInputError, NoiseSource, gaussian_sample, norm

VANILLA = "vanilla"
HONAKER = "honaker"
_MODES = (VANILLA, HONAKER)

# Relative slack on the sensitivity check in add_to_tree.
NORM_TOLERANCE = 1e-9


class OrderingError(ValueError):
    """Leaves must be appended strictly in order 1, 2, 3, ..."""


class SensitivityViolationError(ValueError):
    """A leaf value exceeded the tree's clip norm."""


@dataclass
class PrefixSumEstimate:
    value: np.ndarray
    # Variance of the additive noise per coordinate, in units of (L sigma)^2.
    variance_multiplier: float


def capacity_for(n):
    """Smallest power of two >= n."""
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    return 1 << (n - 1).bit_length()


def dyadic_blocks(t):
    """Maximal complete subtrees covering leaves 1..t, largest first.

    Returns (height, start) pairs: the block spans leaves start+1 .. start+2^height.
    """
    blocks = []
    start = 0
    for h in range(t.bit_length() - 1, -1, -1):
        if (t >> h) & 1:
            blocks.append((h, start))
            start += 1 << h
    return blocks


def honaker_block_variance(height):
    """Noise variance of the reduced-variance estimate of a 2^height-leaf subtree."""
    m = 1 << height
    return 1.0 / (2.0 - 1.0 / m)


def noise_variance_multiplier(t, capacity, mode=VANILLA):
    """Per-coordinate noise variance of the estimate at step t, unit node variance."""
    if not 1 <= t <= capacity:
        raise InvalidInputError(f"t={t} outside 1..{capacity}")
    if mode == VANILLA:
        return float(bin(t).count("1"))
    if mode == HONAKER:
        return float(sum(honaker_block_variance(h) for h, _ in dyadic_blocks(t)))
    raise InvalidInputError(f"unknown estimator mode {mode!r}")


class AggregationTree:
    """Streaming tree aggregation over at most `capacity` leaves.

    Args:
      n: number of steps; capacity is the next power of two.
      sigma: noise multiplier; each node gets N(0, (sigma L)^2) per coordinate.
      L: clip norm, enforced on every real leaf.
      dim: int or shape tuple of leaf values.
      seed: noise seed.
      mode: default estimator used by `estimate`.
      symmetric: draw symmetric matrix noise (upper triangle i.i.d.,
        mirrored); requires a square `dim`.
      stream: noise stream id, see `NoiseSource`.
    """

    def __init__(self, n, sigma, L, dim, seed=0, mode=HONAKER, symmetric=False, stream=0):
        if sigma < 0:
            raise InvalidInputError(f"sigma must be non-negative, got {sigma}")
        if not L > 0:
            raise InvalidInputError(f"L must be positive, got {L}")
        if mode not in _MODES:
            raise InvalidInputError(f"unknown estimator mode {mode!r}")
        self.capacity = capacity_for(n)
        self.depth = self.capacity.bit_length() - 1
        self.sigma = float(sigma)
        self.L = float(L)
        self.shape = (dim,) if isinstance(dim, int) else tuple(dim)
        if symmetric and (len(self.shape) != 2 or self.shape[0] != self.shape[1]):
            raise InvalidInputError("symmetric noise needs a square matrix shape")
        self.symmetric = symmetric
        self.mode = mode
        self.noise_source = NoiseSource(seed, stream)
        self.leaf_count = 0
        self.virtual_leaves = []
        self._sums = {}
        self._noise = {}
        # Reduced-variance partial sums of the maximal complete subtrees,
        # one per set bit of leaf_count: [(height, start, r_prime), ...].
        self._frontier = []

    # -- node access -------------------------------------------------------

    def node_index(self, height, start):
        return (self.capacity >> height) + (start >> height)

    def node_noise(self, idx):
        noise = self._noise.get(idx)
        if noise is None:
            std = self.sigma * self.L
            noise = gaussian_sample(self.noise_source, idx, self.shape, std)
            if self.symmetric:
                upper = np.triu(noise)
                noise = upper + np.triu(noise, 1).T
            self._noise[idx] = noise
        return noise

    def node_sum(self, idx):
        """Exact (noise-free) sum of the leaves under node `idx`."""
        s = self._sums.get(idx)
        return np.zeros(self.shape) if s is None else s

    def node_value(self, idx):
        return self.node_sum(idx) + self.node_noise(idx)

    # -- mutation ----------------------------------------------------------

    def add_to_tree(self, t, v):
        """Adds `v` to every node on the path from leaf `t` to the root.

        Returns the heap indices that were updated, leaf first.
        """
        v = np.asarray(v, dtype=np.float64)
        if norm(v) > self.L * (1 + NORM_TOLERANCE):
            raise SensitivityViolationError(f"||v|| = {norm(v)} exceeds L = {self.L}")
        return self._append(t, v)

    def complete_tree(self, up_to=None):
        """Appends zero-valued virtual leaves until leaf_count == up_to.

        Virtual positions are recorded in `virtual_leaves`; they carry no
        sensitivity. Defaults to filling the whole tree.
        """
        up_to = self.capacity if up_to is None else up_to
        if up_to < self.leaf_count or up_to > self.capacity:
            raise InvalidInputError(
                f"up_to={up_to} outside {self.leaf_count}..{self.capacity}")
        added = []
        zero = np.zeros(self.shape)
        while self.leaf_count < up_to:
            t = self.leaf_count + 1
            self._append(t, zero)
            self.virtual_leaves.append(t)
            added.append(t)
        return added

    def _append(self, t, v):
        if t != self.leaf_count + 1:
            raise OrderingError(f"expected leaf {self.leaf_count + 1}, got {t}")
        if t > self.capacity:
            raise OrderingError(f"tree is full ({self.capacity} leaves)")
        if v.shape != self.shape:
            raise InvalidInputError(f"leaf shape {v.shape} != tree shape {self.shape}")
        idx = self.capacity + t - 1
        touched = []
        while idx >= 1:
            s = self._sums.get(idx)
            self._sums[idx] = v.copy() if s is None else s + v
            self.node_noise(idx)
            touched.append(idx)
            idx //= 2
        self.leaf_count = t
        self._push_frontier(t)
        return touched

    def _push_frontier(self, t):
        # Binary-counter merge: a new leaf block, then fold equal-height siblings.
        height, start = 0, t - 1
        r_prime = self.node_value(self.node_index(0, start))
        while self._frontier and self._frontier[-1][0] == height:
            _, left_start, left_r = self._frontier.pop()
            height += 1
            start = left_start
            r_prime = self.node_value(self.node_index(height, start)) + (left_r + r_prime) / 2
        self._frontier.append((height, start, r_prime))

    # -- estimators --------------------------------------------------------

    def _check_t(self, t):
        if not 1 <= t <= self.leaf_count:
            raise InvalidInputError(f"t={t} outside 1..{self.leaf_count}")

    def get_sum(self, t):
        """Vanilla estimate: sum of the popcount(t) covering node values."""
        self._check_t(t)
        value = np.zeros(self.shape)
        for h, start in dyadic_blocks(t):
            value = value + self.node_value(self.node_index(h, start))
        return PrefixSumEstimate(value, noise_variance_multiplier(t, self.capacity, VANILLA))

    def get_sum_reduced_variance(self, t):
        """Reduced-variance estimate using only nodes inside leaves 1..t."""
        self._check_t(t)
        if t == self.leaf_count:
            parts = [(h, r) for h, _, r in self._frontier]
        else:
            parts = [(h, self._r_prime(h, start)) for h, start in dyadic_blocks(t)]
        value = np.zeros(self.shape)
        for h, r in parts:
            value = value + r / (2.0 - 1.0 / (1 << h))
        return PrefixSumEstimate(value, noise_variance_multiplier(t, self.capacity, HONAKER))

    def _r_prime(self, height, start):
        value = self.node_value(self.node_index(height, start))
        if height == 0:
            return value
        half = 1 << (height - 1)
        left = self._r_prime(height - 1, start)
        right = self._r_prime(height - 1, start + half)
        return value + (left + right) / 2

    def estimate(self, t=None):
        """Prefix-sum estimate at `t` (default: leaf_count) with the tree's mode."""
        t = self.leaf_count if t is None else t
        if self.mode == HONAKER:
            return self.get_sum_reduced_variance(t)
        return self.get_sum(t)

    def exact_sum(self, t=None):
        """Noise-free prefix sum of leaves 1..t."""
        t = self.leaf_count if t is None else t
        self._check_t(t)
        value = np.zeros(self.shape)
        for h, start in dyadic_blocks(t):
            value = value + self.node_sum(self.node_index(h, start))
        return value

    @property
    def materialized_nodes(self):
        return len(self._noise)


def initialize_tree(n, sigma, L, dim, seed=0, mode=HONAKER, **kwargs):
    return AggregationTree(n, sigma, L, dim, seed=seed, mode=mode, **kwargs)


def max_vanilla_multiplier(n):
    """max_{t <= n} popcount(t)."""
    return max(bin(t).count("1") for t in range(1, n + 1))


def ceil_lg(x):
    """ceil(log2(x)) for a positive integer x."""
    return (int(x) - 1).bit_length() if x > 1 else 0


__all__ = [
    "AggregationTree", "PrefixSumEstimate", "OrderingError", "SensitivityViolationError",
    "VANILLA", "HONAKER", "initialize_tree", "noise_variance_multiplier", "capacity_for",
    "dyadic_blocks", "honaker_block_variance", "ceil_lg", "max_vanilla_multiplier",
]
