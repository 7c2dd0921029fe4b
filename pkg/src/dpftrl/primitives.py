"""Vector helpers, clipping, ball projection and a counter-based noise source."""

from dataclasses import dataclass

import numpy as np


class InvalidInputError(ValueError):
    """Raised when an argument violates an operation's precondition."""


def as_vector(v, name="v"):
    """Returns `v` as a float64 array, rejecting NaN/Inf entries."""
    arr = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


def norm(v):
    # Frobenius norm for matrices, l2 for vectors.
    return float(np.sqrt(np.sum(np.square(v))))


def clip(v, L):
    """Scales `v` by min(L / ||v||, 1).

    Vectors already inside the ball, including the exact-threshold case
    ||v|| == L, are returned unchanged.
    """
    if not L > 0:
        raise InvalidInputError(f"clip norm must be positive, got {L}")
    v = as_vector(v)
    n = norm(v)
    if n <= L:
        return v.copy()
    return v * (L / n)


def project_ball(v, mu):
    """Euclidean projection of `v` onto the radius-`mu` ball at the origin."""
    if not mu > 0:
        raise InvalidInputError(f"radius must be positive, got {mu}")
    v = as_vector(v)
    n = norm(v)
    if n <= mu:
        return v.copy()
    return v * (mu / n)


@dataclass(frozen=True)
class NoiseSource:
    """Deterministic Gaussian noise keyed by (seed, stream, node index).

    Every draw builds a fresh generator from the key, so a node's noise can
    be materialized lazily and in any order without changing its value.
    `stream` separates independent consumers sharing one seed (e.g. the bias
    and covariance trees, or successive restart blocks).
    """

    seed: int
    stream: int = 0

    def generator(self, node_index):
        key = [self.seed & 0xFFFFFFFFFFFFFFFF, self.stream, int(node_index)]
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))

    def child(self, stream):
        return NoiseSource(self.seed, stream)


def gaussian_sample(src, node_index, dim, std):
    """Draws N(0, std^2 I) of shape `dim` for the given node index.

    Args:
      src: the `NoiseSource`.
      node_index: non-negative integer identifying the draw.
      dim: int or shape tuple.
      std: non-negative standard deviation; 0 yields exact zeros.

    Returns:
      A float64 array; identical for identical (seed, stream, node_index, dim).
    """
    if std < 0:
        raise InvalidInputError(f"std must be non-negative, got {std}")
    if node_index < 0:
        raise InvalidInputError(f"node_index must be non-negative, got {node_index}")
    if std == 0:
        return np.zeros(dim)
    return src.generator(node_index).standard_normal(dim) * std
