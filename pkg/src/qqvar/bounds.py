"""Symmetric-difference bounds for perturbed half-spaces.

Two bounds are evaluated against observed ``P(A delta B)``:

* the generic slab bound ``C' sqrt(|w - w_hat| E|R| + |t - q|)``;
* the multivariate-t population bound
  ``C (|t - q0| + |(w - w0)^T mu| + ((w - w0)^T Sigma (w - w0))^{1/2})``.

Neither constant is known in closed form, so :func:`fit_constant`
calibrates them on a grid and :func:`verify_bound` checks a held-out grid.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from . import special
from .dist import ProjectedT, _as_vector, check_seed, sample_mvt, t_cdf
from .empirical import HalfSpace

SAFETY_FACTOR = 1.5
_DEGENERATE_TOL = 1e-14
_QUAD_ABS_TOL = 1e-9


@dataclass(frozen=True)
class BoundReport:
    observed: float
    bound_value: float
    constant_used: float
    slack: float
    mcse: float = 0.0
    inputs: dict = field(default_factory=dict)

    @property
    def violation(self):
        return self.slack < -3.0 * self.mcse


@dataclass(frozen=True)
class McSymDiff:
    estimate: float
    mcse: float
    n: int
    slab_violations: int = 0


def generic_slab_bound(w, w_hat, t, q, e_norm_r, c_prime):
    """``C' sqrt(|w - w_hat| E|R| + |t - q|)``."""
    if not c_prime > 0:
        raise ValueError(f"c_prime must be positive, got {c_prime}")
    if not e_norm_r > 0:
        raise ValueError(f"e_norm_r must be positive, got {e_norm_r}")
    dw = float(np.linalg.norm(_as_vector(w) - _as_vector(w_hat, "w_hat")))
    return c_prime * math.sqrt(dw * e_norm_r + abs(t - q))


def t_perturbation_size(model, w0, w, t, q0):
    """``|t - q0| + |(w - w0)^T mu| + ((w - w0)^T Sigma (w - w0))^{1/2}``."""
    d = _as_vector(w) - _as_vector(w0, "w0")
    quad = max(float(d @ model.sigma @ d), 0.0)
    return abs(t - q0) + abs(float(d @ model.mu)) + math.sqrt(quad)


def t_population_bound(model, w0, w, t, q0, c):
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    return c * t_perturbation_size(model, w0, w, t, q0)


def exact_sym_diff_parallel(dist, t, q):
    """``P(A delta B)`` for two half-spaces sharing the same direction."""
    return abs(t_cdf(dist, t) - t_cdf(dist, q))


def exact_sym_diff(model, a, b):
    """``P(A delta B)`` under the model, by one-dimensional quadrature.

    Conditions on the loss of ``b``; given it, the loss of ``a`` is a t law
    with ``nu + 1`` degrees of freedom.
    """
    if np.array_equal(a.w, b.w) and a.t == b.t:
        return 0.0
    nu = model.nu
    mx = -float(b.w @ model.mu)
    my = -float(a.w @ model.mu)
    sb = math.sqrt(float(b.w @ model.sigma @ b.w))
    sa2 = float(a.w @ model.sigma @ a.w)
    cov = float(a.w @ model.sigma @ b.w)
    slope = cov / sb  # loss_a - my = slope * z + noise, z standardized loss_b
    resid2 = sa2 - slope * slope
    zq = (b.t - mx) / sb

    if resid2 <= _DEGENERATE_TOL * sa2:
        # loss_a is an affine function of loss_b
        std = ProjectedT(0.0, 1.0, nu)
        if slope > 0:
            zs = (a.t - my) / slope
            return abs(t_cdf(std, zs) - t_cdf(std, zq))
        zs = (a.t - my) / slope
        lo, hi = min(zq, zs), max(zq, zs)
        return t_cdf(std, lo) + 1.0 - t_cdf(std, hi)

    resid = math.sqrt(resid2)
    log_c = special.std_t_logpdf_const(nu)
    nu1 = nu + 1.0

    def density(z):
        return math.exp(log_c - 0.5 * (nu + 1.0) * math.log1p(z * z / nu))

    def cond_scale(z):
        return resid * math.sqrt((nu + z * z) / nu1)

    def in_a_not_b(z):  # z > zq, loss_a <= t
        return density(z) * special.std_t_cdf((a.t - my - slope * z) / cond_scale(z), nu1)

    def in_b_not_a(z):  # z <= zq, loss_a > t
        return density(z) * special.std_t_cdf(-(a.t - my - slope * z) / cond_scale(z), nu1)

    # the conditional cdf switches over a window of width ~ resid/|slope|
    # around z_cross; nearly parallel pairs need breakpoints there
    marks = []
    if slope != 0:
        z_cross = (a.t - my) / slope
        width = cond_scale(z_cross) / abs(slope)
        marks = [z_cross + k * width for k in (-8.0, -2.0, 0.0, 2.0, 8.0)]
    opts = dict(epsabs=1e-12, epsrel=1e-10, limit=200)

    err = 0.0

    def piece(f, lo, hi):
        # quadpack complains about relative accuracy on pieces that are
        # essentially zero; the absolute error estimate is what matters
        nonlocal err
        cuts = [lo] + [m for m in marks if lo < m < hi] + [hi]
        total = 0.0
        for u, v in zip(cuts[:-1], cuts[1:]):
            val, abserr = integrate.quad(f, u, v, full_output=1, **opts)[:2]
            total += val
            err += abserr
        return total

    value = piece(in_a_not_b, zq, math.inf) + piece(in_b_not_a, -math.inf, zq)
    if err > _QUAD_ABS_TOL:
        warnings.warn(f"symmetric-difference quadrature error estimate {err:.2e}",
                      RuntimeWarning, stacklevel=2)
    return value


def slab_inclusion_check(returns, a, b):
    """Count points of ``A delta B`` outside the slab around ``b``.

    With ``U = -w_b^T R`` and ``V = -(w_a - w_b)^T R`` every point in the
    symmetric difference must satisfy ``|U - t_b| <= |V| + |t_a - t_b|``.
    """
    r = np.asarray(returns, dtype=float)
    in_diff = a.indicator(r) != b.indicator(r)
    u = -(r[in_diff] @ b.w)
    v = -(r[in_diff] @ (a.w - b.w))
    return int(np.count_nonzero(np.abs(u - b.t) > np.abs(v) + abs(a.t - b.t)))


def mc_sym_diff(model, a, b, n, seed):
    """Monte Carlo estimate of ``P(A delta B)`` with binomial standard error."""
    sample = sample_mvt(model, n, seed)
    in_diff = a.indicator(sample.data) != b.indicator(sample.data)
    est = float(np.count_nonzero(in_diff)) / sample.n
    mcse = math.sqrt(est * (1.0 - est) / sample.n)
    return McSymDiff(est, mcse, sample.n, slab_inclusion_check(sample.data, a, b))


@lru_cache(maxsize=32)
def _expected_norm_cached(nu, mu_bytes, sigma_bytes, p, n, seed):
    from .dist import MvtModel
    mu = np.frombuffer(mu_bytes)
    sigma = np.frombuffer(sigma_bytes).reshape(p, p)
    sample = sample_mvt(MvtModel(mu, sigma, nu), n, seed)
    return float(np.mean(np.linalg.norm(sample.data, axis=1)))


def expected_norm(model, n=10**6, seed=0):
    """Monte Carlo value of ``E|R|``, cached per model."""
    return _expected_norm_cached(model.nu, model.mu.tobytes(), model.sigma.tobytes(),
                                 model.p, int(n), check_seed(seed))


def plugin_norm(sample):
    """Plug-in ``n^{-1} sum_i |R_i|``."""
    return float(np.mean(np.linalg.norm(sample.data, axis=1)))


def perturbation_grid(model, w0, q0, k=100, radius=0.05, seed=0, include_zero=False):
    """Random ``(w, t)`` pairs with ``|w - w0| <= radius`` and ``|t - q0| <= radius``."""
    w0 = _as_vector(w0, "w0")
    rng = np.random.Generator(np.random.PCG64(check_seed(seed)))
    grid = [(w0.copy(), float(q0))] if include_zero else []
    while len(grid) < k:
        h = rng.standard_normal(w0.shape[0])
        h /= np.linalg.norm(h)
        grid.append((w0 + rng.uniform(0.0, radius) * h, float(q0 + rng.uniform(-radius, radius))))
    return grid


def _features(model, w0, q0, grid, which, e_norm_r):
    if which == "t_model":
        return np.array([t_perturbation_size(model, w0, w, t, q0) for w, t in grid])
    if which == "generic":
        w0 = _as_vector(w0, "w0")
        return np.array([
            math.sqrt(float(np.linalg.norm(w - w0)) * e_norm_r + abs(t - q0)) for w, t in grid
        ])
    raise ValueError(f"unknown bound kind {which!r}; expected 'generic' or 't_model'")


def _observed(model, w0, q0, grid, n_mc, seed):
    ref = HalfSpace(w0, q0)
    out = []
    seeds = np.random.SeedSequence(check_seed(seed)).generate_state(len(grid), np.uint64)
    for (w, t), s in zip(grid, seeds):
        a = HalfSpace(w, t)
        if n_mc is None:
            out.append((exact_sym_diff(model, a, ref), 0.0))
        else:
            mc = mc_sym_diff(model, a, ref, n_mc, int(s))
            if mc.slab_violations:
                raise AssertionError(f"slab inclusion violated at grid point w={w}, t={t}")
            out.append((mc.estimate, mc.mcse))
    return out


def fit_constant(model, w0, q0, grid, which="t_model", safety=SAFETY_FACTOR,
                 method="envelope", e_norm_r=None, n_mc=None, seed=0):
    """Calibrate a bound constant on ``grid`` and inflate it by ``safety``.

    ``method="envelope"`` takes the largest observed/feature ratio on the
    grid; ``method="lsq"`` the least-squares slope through the origin, which
    undercovers directions where the ratio is above average.
    """
    if e_norm_r is None:
        e_norm_r = expected_norm(model)
    feats = _features(model, w0, q0, grid, which, e_norm_r)
    obs = np.array([o for o, _ in _observed(model, w0, q0, grid, n_mc, seed)])
    keep = feats > 0
    if not np.any(keep):
        raise ValueError("calibration grid has no perturbation")
    if method == "envelope":
        base = float(np.max(obs[keep] / feats[keep]))
    elif method == "lsq":
        base = float(feats @ obs) / float(feats @ feats)
    else:
        raise ValueError(f"unknown fit method {method!r}")
    return safety * base


def verify_bound(model, w0, q0, grid, constant, which="t_model", n_mc=None, seed=0,
                 e_norm_r=None):
    """Evaluate observed ``P(A delta B)`` against a bound over a grid.

    ``n_mc=None`` uses exact quadrature; otherwise each grid point gets an
    independent Monte Carlo sample of size ``n_mc``. Violations are data.
    """
    w0 = _as_vector(w0, "w0")
    if e_norm_r is None:
        e_norm_r = expected_norm(model)
    feats = _features(model, w0, q0, grid, which, e_norm_r)
    reports = []
    for (w, t), g, (obs, mcse) in zip(grid, feats, _observed(model, w0, q0, grid, n_mc, seed)):
        bound = constant * float(g)
        reports.append(BoundReport(
            observed=float(obs), bound_value=bound, constant_used=float(constant),
            slack=bound - float(obs), mcse=float(mcse),
            inputs={
                "which": which, "w": list(map(float, w)), "w0": list(map(float, w0)),
                "t": float(t), "q0": float(q0), "e_norm_r": float(e_norm_r),
                "dw_norm": float(np.linalg.norm(w - w0)), "dt": float(abs(t - q0)),
            },
        ))
    return reports
