"""Asymptotic confidence intervals for the projected quantile.

The interval is ``q_hat +- z_{1-gamma/2} sqrt(alpha (1 - alpha)) / (sqrt(n) f)``
with ``f`` either the analytic projected-t density or a Gaussian-kernel
estimate from the sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .dist import population_quantile, project_loss, t_pdf
from .empirical import empirical_quantile, sorted_losses

_STD_NORMAL = NormalDist()


@dataclass(frozen=True)
class QuantileCI:
    center: float
    half_width: float
    gamma: float
    density_used: float
    density_method: str
    z: float = float("nan")
    evaluated_at: str = "population"

    @property
    def lower(self):
        return self.center - self.half_width

    @property
    def upper(self):
        return self.center + self.half_width

    def contains(self, value):
        return self.lower <= value <= self.upper


def standard_normal_quantile(p):
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        return -_STD_NORMAL.inv_cdf(1.0 - p)
    return _STD_NORMAL.inv_cdf(p)


def confidence_interval(q_hat, alpha, gamma, n, density, method="analytic",
                        evaluated_at="population"):
    if not density > 0:
        raise ValueError(f"density must be positive, got {density}")
    if int(n) < 2:
        raise ValueError("n must be >= 2")
    if not (0.0 < gamma <= 1.0):
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    z = standard_normal_quantile(1.0 - gamma / 2.0) if gamma < 1.0 else 0.0
    half = z * math.sqrt(alpha * (1.0 - alpha)) / (math.sqrt(n) * density)
    return QuantileCI(float(q_hat), float(half), float(gamma), float(density), method, z,
                      evaluated_at)


def silverman_bandwidth(losses):
    x = np.asarray(losses, dtype=float)
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if not spread > 0:
        spread = sd
    if not spread > 0:
        raise ValueError("degenerate sample: zero spread")
    return 0.9 * spread * x.shape[0] ** (-0.2)


def kernel_density_at(losses, x, bandwidth=None):
    """Gaussian-kernel density estimate at ``x`` from sorted losses.

    Only points within 40 bandwidths of ``x`` are summed; the rest
    contribute below double precision.
    """
    losses = np.asarray(losses, dtype=float)
    if losses.shape[0] < 10:
        raise ValueError("kernel density needs at least 10 observations")
    h = silverman_bandwidth(losses) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    lo, hi = np.searchsorted(losses, [x - 40 * h, x + 40 * h])
    u = (losses[lo:hi] - x) / h
    dens = float(np.exp(-0.5 * u * u).sum()) / (losses.shape[0] * h * math.sqrt(2 * math.pi))
    if not dens > 0:
        raise ValueError("kernel density underflowed at x")
    return dens


def quantile_ci(sample, w, alpha, gamma, model=None, method="analytic",
                evaluated_at="population"):
    """Interval around ``q_hat_alpha(w)`` from a sample.

    ``evaluated_at`` picks where the density is read: ``"population"`` uses
    ``q_alpha(w)`` (needs ``model``), ``"empirical"`` uses ``q_hat_alpha(w)``.
    """
    q_hat = empirical_quantile(sample, w, alpha)
    if evaluated_at == "population":
        if model is None:
            raise ValueError("evaluating at the population quantile needs the model")
        point = population_quantile(model, w, alpha)
    elif evaluated_at == "empirical":
        point = q_hat
    else:
        raise ValueError(f"unknown evaluation point {evaluated_at!r}")
    if method == "analytic":
        if model is None:
            raise ValueError("analytic density needs the model")
        dens = t_pdf(project_loss(model, w), point)
    elif method == "kernel":
        dens = kernel_density_at(sorted_losses(sample, w), point)
    else:
        raise ValueError(f"unknown density method {method!r}")
    return confidence_interval(q_hat, alpha, gamma, sample.n, dens, method, evaluated_at)
