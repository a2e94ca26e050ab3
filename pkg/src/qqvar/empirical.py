"""Empirical measures over the half-space class ``{r : -w^T r <= t}``.

Projected losses are computed once per (sample, w), sorted, and reused by
the cdf and quantile queries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dist import _as_vector, project_loss, t_cdf, population_quantile

QUANTILE_CONVENTION = "order-statistic ceil(n*alpha), left-continuous inverse"
_CACHE_LIMIT = 16


@dataclass(frozen=True, eq=False)
class HalfSpace:
    """The set ``A_{w,t} = {r : -w^T r <= t}``."""

    w: np.ndarray
    t: float

    def __post_init__(self):
        w = _as_vector(self.w)
        if not np.any(w):
            raise ValueError("half-space normal w must be nonzero")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "t", float(self.t))

    def indicator(self, r):
        """Boolean membership of each row of ``r``."""
        return -(np.asarray(r) @ self.w) <= self.t


@dataclass(frozen=True)
class PartitionCounts:
    n11: int
    n10: int
    n01: int
    n00: int

    @property
    def n(self):
        return self.n11 + self.n10 + self.n01 + self.n00


def _check_sample(sample):
    if sample.n < 1:
        raise ValueError("empty sample")


def sorted_losses(sample, w):
    """Sorted projected losses ``-w^T R_i``; cached on the sample."""
    _check_sample(sample)
    w = _as_vector(w)
    if w.shape[0] != sample.p:
        raise ValueError(f"weight vector has length {w.shape[0]}, sample has p={sample.p}")
    if not np.any(w):
        raise ValueError("degenerate projection: w = 0")
    key = w.tobytes()
    cache = sample._projections
    losses = cache.get(key)
    if losses is None:
        losses = np.sort(-(sample.data @ w))
        losses.flags.writeable = False
        if len(cache) >= _CACHE_LIMIT:
            cache.pop(next(iter(cache)))
        cache[key] = losses
    return losses


def empirical_cdf(sample, w, t):
    """``F_n(w, t) = n^{-1} #{i : -w^T R_i <= t}``."""
    losses = sorted_losses(sample, w)
    return np.searchsorted(losses, t, side="right") / losses.shape[0]


def order_statistic_rank(n, alpha):
    """Smallest ``k`` with ``k / n >= alpha`` (evaluated in floating point)."""
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    k = max(int(np.ceil(n * alpha)), 1)
    while k > 1 and (k - 1) / n >= alpha:
        k -= 1
    while k / n < alpha:
        k += 1
    return k


def empirical_quantile(sample, w, alpha):
    """``inf{t : F_n(w, t) >= alpha}``, the ceil(n*alpha)-th order statistic."""
    losses = sorted_losses(sample, w)
    return float(losses[order_statistic_rank(losses.shape[0], alpha) - 1])


def partition_counts(sample, a, b):
    _check_sample(sample)
    in_a = a.indicator(sample.data)
    in_b = b.indicator(sample.data)
    n11 = int(np.count_nonzero(in_a & in_b))
    n10 = int(np.count_nonzero(in_a & ~in_b))
    n01 = int(np.count_nonzero(~in_a & in_b))
    return PartitionCounts(n11, n10, n01, sample.n - n11 - n10 - n01)


def sym_diff_proportion(sample, a, b):
    """``P_n(A delta B)``, the fraction of rows in exactly one half-space."""
    _check_sample(sample)
    return float(np.count_nonzero(a.indicator(sample.data) != b.indicator(sample.data))) / sample.n


def great_circle_directions(w0, k=21, max_angle=0.1, pivot=None):
    """``k`` vectors of norm ``|w0|`` on an arc through ``w0``.

    The arc rotates ``w0`` toward ``pivot`` (default: the first coordinate
    axis not parallel to ``w0``) by angles in ``[-max_angle, max_angle]``.
    """
    w0 = _as_vector(w0, "w0")
    r = np.linalg.norm(w0)
    u = w0 / r
    if pivot is None:
        pivot = np.eye(w0.shape[0])[int(np.argmin(np.abs(u)))]
    v = np.asarray(pivot, dtype=float) - (pivot @ u) * u
    v /= np.linalg.norm(v)
    angles = np.linspace(-max_angle, max_angle, k)
    return [r * (np.cos(a) * u + np.sin(a) * v) for a in angles]


def default_grid(model, w0, alpha, k_dirs=21, k_thresholds=21, max_angle=0.1):
    """Tensor grid of directions near ``w0`` and thresholds ``q0 +- 3 scale``."""
    dist = project_loss(model, w0)
    q0 = population_quantile(model, w0, alpha)
    ts = np.linspace(q0 - 3 * dist.scale, q0 + 3 * dist.scale, k_thresholds)
    return [(w, float(t)) for w in great_circle_directions(w0, k_dirs, max_angle) for t in ts]


def sup_discrepancy(sample, model, grid):
    """Max over the grid of ``|F_n(w, t) - F(w, t)|``.

    A lower bound on the supremum over the whole half-space class.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("grid must be nonempty")
    worst = 0.0
    for w, t in grid:
        gap = abs(empirical_cdf(sample, w, t) - t_cdf(project_loss(model, w), t))
        worst = max(worst, gap)
    return worst
