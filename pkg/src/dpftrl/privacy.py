"""Renyi-DP accounting for tree-aggregated Gaussian noise.

All Gaussian-mechanism curves here have the form eps(alpha) = alpha * zeta /
(2 sigma^2), where zeta is the squared l2 sensitivity of the full vector of
tree node values (in units of the clip norm) and sigma the noise multiplier.
The accountants differ only in how they bound zeta:

* one tree, each record used once: zeta = ceil(lg(n + 1));
* E restarted trees: zeta = E * ceil(lg(n + 1));
* least squares (bias and covariance trees): 2 * ceil(lg n);
* one tree, E participations separated by >= xi steps: a level-wise bound, an
  exact dynamic program, or an exact count for a known participation order.

Curves are converted to (eps, delta)-DP with eps(alpha) + ln(1/delta)/(alpha-1),
minimized over a fixed grid of orders.
"""

import functools
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from dpftrl.primitives import InvalidInputError
from dpftrl.tree import capacity_for, ceil_lg

VIRTUAL = "*"

DEFAULT_ORDERS = tuple(sorted(
    {1.25, 1.5, 1.75, 2.0, 2.5}
    | {float(a) for a in range(2, 65)}
    | {a + 0.5 for a in range(2, 12)}
    | {128.0, 256.0}
))

LEVEL_WISE = "level-wise"
DYNAMIC_PROGRAM = "dynamic-program"
GIVEN_ORDER = "given-order"

# Upper limit on memo entries for the dynamic program.
DEFAULT_MEMO_BUDGET = 5_000_000


class CalibrationError(RuntimeError):
    """No noise multiplier in the search bracket reaches the target epsilon."""


class ResourceError(RuntimeError):
    """The requested computation exceeds its configured budget."""


@dataclass
class RdpCurve:
    """Renyi-DP epsilons on a grid of orders (all > 1)."""

    orders: np.ndarray
    epsilons: np.ndarray

    def __post_init__(self):
        self.orders = np.asarray(self.orders, dtype=np.float64)
        self.epsilons = np.asarray(self.epsilons, dtype=np.float64)
        if self.orders.shape != self.epsilons.shape or self.orders.ndim != 1:
            raise InvalidInputError("orders and epsilons must be 1-d and equal length")
        if np.any(self.orders <= 1):
            raise InvalidInputError("RDP orders must exceed 1")
        if np.any(self.epsilons < 0):
            raise InvalidInputError("RDP epsilons must be non-negative")

    def __len__(self):
        return len(self.orders)

    def at(self, alpha):
        """Value at `alpha`; off-grid orders take the next larger grid value."""
        idx = np.searchsorted(self.orders, alpha, side="left")
        if idx == len(self.orders):
            return math.inf
        return float(self.epsilons[idx])

    @classmethod
    def gaussian(cls, zeta, sigma, orders=DEFAULT_ORDERS):
        orders = np.asarray(orders, dtype=np.float64)
        return cls(orders, np.array([rdp_from_sensitivity(zeta, sigma, a) for a in orders]))

    @classmethod
    def zero(cls, orders=DEFAULT_ORDERS):
        orders = np.asarray(orders, dtype=np.float64)
        return cls(orders, np.zeros_like(orders))


@dataclass
class SensitivityReport:
    zeta: float
    method: str
    per_identifier: dict = field(default_factory=dict)


# -- closed-form Gaussian rates ------------------------------------------------

def _check_sigma_alpha(sigma, alpha):
    if sigma < 0:
        raise InvalidInputError(f"sigma must be non-negative, got {sigma}")
    if not alpha > 1:
        raise InvalidInputError(f"alpha must exceed 1, got {alpha}")


def rdp_from_sensitivity(zeta, sigma, alpha):
    """alpha * zeta / (2 sigma^2); infinite when sigma == 0 and zeta > 0."""
    _check_sigma_alpha(sigma, alpha)
    if zeta < 0:
        raise InvalidInputError(f"zeta must be non-negative, got {zeta}")
    if zeta == 0:
        return 0.0
    if sigma == 0:
        return math.inf
    return alpha * zeta / (2.0 * sigma * sigma)


def rdp_single_tree(n, sigma, alpha):
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    return rdp_from_sensitivity(ceil_lg(n + 1), sigma, alpha)


def rdp_tree_restarts(n, sigma, epochs, alpha):
    if epochs < 1:
        raise InvalidInputError(f"epochs must be >= 1, got {epochs}")
    return epochs * rdp_single_tree(n, sigma, alpha)


def rdp_ls_trees(n, sigma, alpha):
    """Bias plus covariance tree for least squares: alpha ceil(lg n) / sigma^2."""
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    return rdp_from_sensitivity(2 * ceil_lg(n), sigma, alpha)


# -- sensitivity for a single tree with repeated participation -----------------

def sensitivity_level_wise(T, E, xi):
    """Per-level quadratic-program bound, summed over all levels.

    Levels are those of the padded tree with 2^ceil(lg T) leaves; height 0 is
    the leaf level. At a level with k nodes of 2^h leaves each, one record can
    touch a node at most mu = ceil(2^h / (xi + 1)) times and the level at most
    E times; the worst split fills floor(E / mu) nodes to mu and puts the
    remainder in one more node.
    """
    if T < 1 or E < 0 or xi < 0:
        raise InvalidInputError(f"need T >= 1, E >= 0, xi >= 0; got {T}, {E}, {xi}")
    capacity = capacity_for(T)
    depth = capacity.bit_length() - 1
    rho = 0
    for h in range(depth + 1):
        k = capacity >> h
        mu = -(-(1 << h) // (xi + 1))
        k_star = min(k, E // mu)
        zeta_h = k_star * mu * mu
        if k_star < k:
            zeta_h += (E - k_star * mu) ** 2
        rho += zeta_h
    return SensitivityReport(float(rho), LEVEL_WISE)


def _dp_state_estimate(T, E, xi):
    return (E + 1) * (xi + 1) ** 2 * (T.bit_length() + 1) ** 2


def sensitivity_dp(T, E, xi, memo_budget=DEFAULT_MEMO_BUDGET):
    """Exact worst case of sum_z c(z)^2 over placements of <= E participations.

    The tree is the forest of complete dyadic subtrees inside leaves 1..T (the
    nodes the streaming estimators can ever release). `zeta(contrib, start,
    end, size)` is the best value for `contrib` participations in a block of
    `size` leaves whose first `start` leaves are blocked and whose trailing
    separation may overflow `end` leaves past the block. A block splits into
    its largest power-of-two prefix `k < size` and the rest; the split point
    carries the overflow `j` of the left part, which becomes the right part's
    blocked prefix.
    """
    if T < 1 or E < 0 or xi < 0:
        raise InvalidInputError(f"need T >= 1, E >= 0, xi >= 0; got {T}, {E}, {xi}")
    if _dp_state_estimate(T, E, xi) > memo_budget:
        raise ResourceError(
            f"dynamic program for T={T}, E={E}, xi={xi} exceeds memo budget {memo_budget}")
    gap = xi + 1

    @functools.lru_cache(maxsize=None)
    def zeta(contrib, start, end, size):
        if start + contrib * gap > size + end:
            return -math.inf
        if contrib == 0:
            return 0
        if size == 1:
            return 1 if contrib == 1 else -math.inf
        power_of_two = size & (size - 1) == 0
        k = size >> 1 if power_of_two else 1 << (size.bit_length() - 1)
        best = -math.inf
        for i in range(contrib + 1):
            for j in range(xi + 1):
                left = zeta(contrib - i, start, j, k)
                if left == -math.inf:
                    continue
                right = zeta(i, j, end, size - k)
                if left + right > best:
                    best = left + right
        if best == -math.inf:
            return best
        return best + (contrib * contrib if power_of_two else 0)

    value = max(zeta(w, 0, xi, T) for w in range(E + 1))
    return SensitivityReport(float(value), DYNAMIC_PROGRAM)


def _is_virtual(token):
    return token is None or token == VIRTUAL


def sensitivity_given_order(order):
    """Squared sensitivity per identifier for a known participation order.

    Builds the tree layer by layer: each layer pairs consecutive nodes of the
    one below, dropping a trailing unpaired node. Every node adds c^2 to the
    record of each identifier occurring c times in it; virtual steps (`"*"` or
    None) are skipped when counting.

    Args:
      order: sequence of positive integer identifiers and virtual markers.

    Returns:
      A `SensitivityReport` whose `per_identifier` maps id -> rho_id and whose
      `zeta` is the maximum.
    """
    order = list(order)
    if not order:
        raise InvalidInputError("order must be non-empty")
    rho = Counter()
    layer = []
    for token in order:
        if _is_virtual(token):
            layer.append(Counter())
            continue
        if isinstance(token, bool) or int(token) != token or token < 1:
            raise InvalidInputError(f"identifiers must be positive integers, got {token!r}")
        layer.append(Counter({int(token): 1}))
    while layer:
        for node in layer:
            for ident, c in node.items():
                rho[ident] += c * c
        if len(layer) < 2:
            break
        layer = [layer[i] + layer[i + 1] for i in range(0, len(layer) - 1, 2)]
    per_id = {k: float(v) for k, v in sorted(rho.items())}
    zeta = max(per_id.values(), default=0.0)
    return SensitivityReport(zeta, GIVEN_ORDER, per_id)


class SensitivityTracker:
    """Streaming version of `sensitivity_given_order`.

    `append` one step at a time; the complete dyadic nodes ending at that step
    are formed from the stack of maximal complete subtrees, exactly as a binary
    counter carries.
    """

    def __init__(self):
        self.rho = Counter()
        self.zeta = 0.0
        self.steps = 0
        self._stack = []  # (height, Counter)

    def append(self, token):
        node = Counter() if _is_virtual(token) else Counter({int(token): 1})
        height = 0
        self._charge(node)
        while self._stack and self._stack[-1][0] == height:
            _, left = self._stack.pop()
            node = left + node
            height += 1
            self._charge(node)
        self._stack.append((height, node))
        self.steps += 1
        return self.zeta

    def _charge(self, node):
        for ident, c in node.items():
            self.rho[ident] += c * c
            if self.rho[ident] > self.zeta:
                self.zeta = float(self.rho[ident])

    def report(self):
        per_id = {k: float(v) for k, v in sorted(self.rho.items())}
        return SensitivityReport(self.zeta, GIVEN_ORDER, per_id)


def read_order_file(path):
    """Reads one token per line: a positive integer or `*` for a virtual step."""
    order = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            token = line.strip()
            if not token:
                continue
            if token == VIRTUAL:
                order.append(VIRTUAL)
                continue
            try:
                ident = int(token)
            except ValueError:
                raise InvalidInputError(f"{path}:{lineno}: bad token {token!r}") from None
            if ident < 1:
                raise InvalidInputError(f"{path}:{lineno}: identifiers must be positive")
            order.append(ident)
    return order


def write_order_file(path, order):
    with open(path, "w", newline="\n") as f:
        for token in order:
            f.write(f"{VIRTUAL if _is_virtual(token) else int(token)}\n")


# -- composition and conversion -----------------------------------------------

def compose_rdp(curves, orders=DEFAULT_ORDERS):
    """Pointwise sum of RDP curves (adaptive composition).

    Curves on different grids are evaluated on the union grid; a curve missing
    an order contributes its value at the next larger order it has (RDP is
    non-decreasing in alpha, so this only over-estimates).
    """
    curves = list(curves)
    if not curves:
        return RdpCurve.zero(orders)
    grid = curves[0].orders
    if all(np.array_equal(c.orders, grid) for c in curves):
        return RdpCurve(grid.copy(), np.sum([c.epsilons for c in curves], axis=0))
    grid = np.unique(np.concatenate([c.orders for c in curves]))
    total = np.zeros_like(grid)
    for c in curves:
        total += np.array([c.at(a) for a in grid])
    return RdpCurve(grid, total)


def rdp_to_dp(curve, delta):
    """Classic conversion: min over alpha of eps(alpha) + ln(1/delta)/(alpha - 1).

    Returns (epsilon, alpha at the minimum). Infinite everywhere gives
    (inf, nan).
    """
    if not 0 < delta < 1:
        raise InvalidInputError(f"delta must lie in (0, 1), got {delta}")
    if len(curve) == 0:
        raise InvalidInputError("empty RDP curve")
    with np.errstate(invalid="ignore"):
        candidates = curve.epsilons + math.log(1 / delta) / (curve.orders - 1)
    if not np.any(np.isfinite(candidates)):
        return math.inf, math.nan
    idx = int(np.nanargmin(candidates))
    return float(candidates[idx]), float(curve.orders[idx])


def epsilon_for(zeta, sigma, delta, orders=DEFAULT_ORDERS):
    """(eps, delta)-DP epsilon of a Gaussian curve with squared sensitivity zeta."""
    return rdp_to_dp(RdpCurve.gaussian(zeta, sigma, orders), delta)[0]


def single_tree_zeta(n, epochs=1):
    """Squared sensitivity of `epochs` restarted trees of n steps each."""
    return epochs * ceil_lg(n + 1)


def calibrate_noise(epsilon, delta, *, n=None, epochs=1, zeta=None,
                    orders=DEFAULT_ORDERS, rtol=1e-9, sigma_max=1e6):
    """Smallest noise multiplier whose converted epsilon is <= `epsilon`.

    Exactly one accounting must be given: `n` (with `epochs`) for restarted
    single-participation trees, or an explicit squared sensitivity `zeta`.
    Bisection on sigma; the returned value is on the feasible side.
    """
    if not epsilon > 0 or not math.isfinite(epsilon):
        raise InvalidInputError(f"target epsilon must be positive and finite, got {epsilon}")
    if (n is None) == (zeta is None):
        raise InvalidInputError("give exactly one of n or zeta")
    if zeta is None:
        zeta = single_tree_zeta(n, epochs)
    if zeta == 0:
        return 0.0

    def eps_at(sigma):
        return epsilon_for(zeta, sigma, delta, orders)

    hi = 1.0
    while eps_at(hi) > epsilon:
        hi *= 2
        if hi > sigma_max:
            raise CalibrationError(
                f"epsilon={epsilon} unreachable with sigma <= {sigma_max} (delta={delta})")
    lo = hi / 2
    while eps_at(lo) <= epsilon:
        lo /= 2
        if lo < 1e-12:
            return lo
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if eps_at(mid) <= epsilon:
            hi = mid
        else:
            lo = mid
    return hi


def closed_form_sigma(n, epsilon, delta, epochs=1):
    """sqrt(2 E ceil(lg(n+1)) ln(1/delta)) / eps, the textbook single-tree setting."""
    return math.sqrt(2 * epochs * ceil_lg(n + 1) * math.log(1 / delta)) / epsilon
