"""Population laws: the multivariate Student-t model and its projections.

A return vector ``R ~ t_nu(mu, Sigma)`` is generated as
``mu + L Z / sqrt(S / nu)`` with ``L L^T = Sigma``, ``Z ~ N_p(0, I)`` and
``S ~ chi^2_nu``. Every projected loss ``L(w) = -w^T R`` is then a
location-scale univariate t with location ``-w^T mu`` and scale
``(w^T Sigma w)^{1/2}``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import special

SYMMETRY_TOL = 1e-12
FACTOR_TOL = 1e-10
_UINT64_MAX = 2**64 - 1


def _as_vector(x, name="w"):
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def _readonly(a):
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


def check_seed(seed):
    seed = int(seed)
    if not 0 <= seed <= _UINT64_MAX:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


@dataclass(frozen=True, eq=False)
class MvtModel:
    """Multivariate Student-t law ``t_nu(mu, Sigma)``.

    ``nu <= 2`` is accepted (the variance-boundary stress regime) and
    surfaced through :attr:`boundary`; the asymptotic theory needs ``nu > 2``.
    """

    mu: np.ndarray
    sigma: np.ndarray
    nu: float
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mu = _as_vector(self.mu, "mu")
        sigma = np.asarray(self.sigma, dtype=float)
        p = mu.shape[0]
        if sigma.shape != (p, p):
            raise ValueError(f"sigma must be {p}x{p}, got {sigma.shape}")
        if not np.all(np.isfinite(sigma)):
            raise ValueError("sigma contains non-finite entries")
        scale = max(np.max(np.abs(sigma)), 1.0)
        if np.max(np.abs(sigma - sigma.T)) > SYMMETRY_TOL * scale:
            raise ValueError("sigma is not symmetric")
        nu = float(self.nu)
        if not (nu > 0 and math.isfinite(nu)):
            raise ValueError(f"nu must be a finite positive number, got {self.nu}")
        try:
            chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError as exc:
            raise ValueError("sigma is not positive definite") from exc
        resid = np.linalg.norm(chol @ chol.T - sigma) / np.linalg.norm(sigma)
        if resid > FACTOR_TOL:
            raise ValueError(f"cholesky factor does not reconstruct sigma ({resid:.2e})")
        object.__setattr__(self, "mu", _readonly(mu))
        object.__setattr__(self, "sigma", _readonly(sigma))
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "chol", _readonly(chol))

    @classmethod
    def equicorrelated(cls, p, rho, nu, mu=None):
        """Unit-diagonal scatter with constant off-diagonal ``rho``."""
        sigma = np.full((p, p), float(rho))
        np.fill_diagonal(sigma, 1.0)
        return cls(np.zeros(p) if mu is None else mu, sigma, nu)

    @property
    def p(self):
        return self.mu.shape[0]

    @property
    def boundary(self):
        """True when ``nu <= 2`` (outside the finite-variance theory)."""
        return self.nu <= 2.0

    @property
    def tag(self):
        h = hashlib.sha256()
        h.update(np.float64(self.nu).tobytes())
        h.update(self.mu.tobytes())
        h.update(self.sigma.tobytes())
        return f"mvt-p{self.p}-nu{self.nu:g}-{h.hexdigest()[:12]}"


@dataclass(frozen=True)
class ProjectedT:
    """Univariate location-scale t law of a projected loss."""

    loc: float
    scale: float
    nu: float

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")


@dataclass(frozen=True, eq=False)
class ReturnSample:
    """An ``n x p`` block of simulated returns with its provenance."""

    data: np.ndarray
    seed: int
    model_tag: str
    _projections: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2 or data.shape[0] < 1:
            raise ValueError("sample data must be an n x p matrix with n >= 1")
        if data.flags.writeable:
            data = _readonly(data)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "seed", check_seed(self.seed))

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def p(self):
        return self.data.shape[1]


def draw_mvt(model, n, rng):
    """Draw ``n`` rows from ``model`` using the generator ``rng``."""
    z = rng.standard_normal((n, model.p))
    s = rng.chisquare(model.nu, n)
    return model.mu + (z @ model.chol.T) / np.sqrt(s / model.nu)[:, None]


def sample_mvt(model, n, seed):
    """I.i.d. sample of size ``n`` from ``model``; bit-identical per seed."""
    n = int(n)
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    seed = check_seed(seed)
    rng = np.random.Generator(np.random.PCG64(seed))
    data = draw_mvt(model, n, rng)
    data.flags.writeable = False
    return ReturnSample(data, seed, model.tag)


def project_loss(model, w):
    """Exact law of ``L(w) = -w^T R``."""
    w = _as_vector(w)
    if w.shape[0] != model.p:
        raise ValueError(f"weight vector has length {w.shape[0]}, model has p={model.p}")
    if not np.any(w):
        raise ValueError("degenerate projection: w = 0")
    var = float(w @ model.sigma @ w)
    if not var > 0:
        raise ValueError("degenerate projection: w^T Sigma w underflows to zero")
    return ProjectedT(loc=-float(w @ model.mu), scale=math.sqrt(var), nu=model.nu)


def _check_x(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("evaluation point must be finite")
    return x


def t_pdf(dist, x):
    """Density of the location-scale t law; accepts scalars or arrays."""
    x = _check_x(x)
    z = (x - dist.loc) / dist.scale
    log_c = special.std_t_logpdf_const(dist.nu)
    out = np.exp(log_c - 0.5 * (dist.nu + 1.0) * np.log1p(z * z / dist.nu)) / dist.scale
    return float(out) if out.ndim == 0 else out


def t_cdf(dist, x):
    x = _check_x(x)
    if x.ndim == 0:
        return special.std_t_cdf((float(x) - dist.loc) / dist.scale, dist.nu)
    z = (x - dist.loc) / dist.scale
    return np.array([special.std_t_cdf(float(v), dist.nu) for v in z.ravel()]).reshape(z.shape)


def t_quantile(dist, alpha):
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return dist.loc + dist.scale * special.std_t_ppf(alpha, dist.nu)


def population_cdf(model, w, q):
    """``F(w, q) = P(-w^T R <= q)``."""
    return t_cdf(project_loss(model, w), q)


def population_quantile(model, w, alpha):
    """``q_alpha(w)``, the alpha-quantile of the projected loss."""
    return t_quantile(project_loss(model, w), alpha)


def quantile_gradient(model, w, alpha):
    """Gradient of ``q_alpha(w)`` with respect to the weights."""
    w = _as_vector(w)
    dist = project_loss(model, w)
    return -model.mu + special.std_t_ppf(alpha, model.nu) * (model.sigma @ w) / dist.scale
