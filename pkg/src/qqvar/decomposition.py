"""Q-Q orthogonality decomposition of the estimated projected quantile.

For a reference direction ``w0`` and an estimate ``w_hat``::

    q_hat(w_hat) - q(w0) = D1 + D2 + D3
    D1 = q(w_hat) - q(w0)                                   directional
    D2 = (alpha - F_n(w_hat, q(w_hat))) / f_{w_hat}(q(w_hat))  empirical
    D3 = residual                                           Bahadur remainder

Population quantities come from the exact projected-t law; only ``F_n``
and ``q_hat`` use the sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import special
from .dist import _as_vector, population_cdf, population_quantile, project_loss, t_pdf
from .empirical import empirical_cdf, empirical_quantile

RANK_TOL = 1e-12
TANGENT_TOL = 1e-10


@dataclass(frozen=True)
class QQDecomposition:
    d1: float
    d2: float
    d3: float
    total: float
    q0: float
    q_alpha_what: float
    q_hat: float
    density_at_quantile: float

    def as_dict(self):
        return {
            "d1": self.d1,
            "d2": self.d2,
            "d3": self.d3,
            "total": self.total,
            "q0": self.q0,
            "q_alpha_what": self.q_alpha_what,
            "q_hat": self.q_hat,
            "density_at_quantile": self.density_at_quantile,
        }


def compute(model, sample, w0, w_hat, alpha):
    """Split ``q_hat_alpha(w_hat) - q_alpha(w0)`` into D1, D2 and D3."""
    w0 = _as_vector(w0, "w0")
    w_hat = _as_vector(w_hat, "w_hat")
    q0 = population_quantile(model, w0, alpha)
    dist_hat = project_loss(model, w_hat)
    q_what = population_quantile(model, w_hat, alpha)
    dens = t_pdf(dist_hat, q_what)
    if not dens > 0:
        raise ArithmeticError(f"non-positive density {dens} at the projected quantile")
    q_hat = empirical_quantile(sample, w_hat, alpha)
    total = q_hat - q0
    d1 = q_what - q0
    d2 = (alpha - empirical_cdf(sample, w_hat, q_what)) / dens
    d3 = _closing_residual(total, d1, d2)
    return QQDecomposition(
        d1=float(d1), d2=float(d2), d3=float(d3), total=float(total),
        q0=float(q0), q_alpha_what=float(q_what), q_hat=float(q_hat),
        density_at_quantile=float(dens),
    )


def _closing_residual(total, d1, d2):
    """``total - d1 - d2``, moved by at most a few ulps so that the float sum
    ``d1 + d2 + d3`` reproduces ``total`` exactly whenever some float can.

    When every sum ``(d1 + d2) + x`` rounds past ``total`` (cancellation,
    or a tie that always rounds to the even neighbour) the plain residual
    is kept; the sum is then off by one rounding.
    """
    head = d1 + d2
    d3 = total - head
    for _ in range(4):
        miss = (head + d3) - total
        if miss == 0.0:
            return d3
        d3 = math.nextafter(d3, -math.inf if miss > 0 else math.inf)
    return total - head


def _reference(model, w0, q0):
    w0 = _as_vector(w0, "w0")
    s0_sq = float(w0 @ model.sigma @ w0)
    if not s0_sq > 0:
        raise ValueError("degenerate scale: w0^T Sigma w0 must be positive")
    s0 = math.sqrt(s0_sq)
    z0 = (q0 + float(w0 @ model.mu)) / s0
    dens = math.exp(special.std_t_logpdf_const(model.nu)
                    - 0.5 * (model.nu + 1.0) * math.log1p(z0 * z0 / model.nu))
    return w0, s0, z0, dens


def directional_derivative(model, w0, q0, h):
    """Derivative of ``F(w, q0)`` at ``w0`` along ``h``."""
    w0, s0, z0, dens = _reference(model, w0, q0)
    h = _as_vector(h, "h")
    shift = q0 + float(w0 @ model.mu)
    return dens * (float(h @ model.mu) / s0 - shift * float(h @ model.sigma @ w0) / s0**3)


def threshold_derivative(model, w0, q0):
    """``dF/dq`` at ``(w0, q0)``: the projected density ``f_{w0}(q0)``."""
    _, s0, _, dens = _reference(model, w0, q0)
    return dens / s0


@dataclass(frozen=True, eq=False)
class TangentBasis:
    """Orthonormal basis of ``{h : h^T mu = 0, h^T Sigma w0 = 0}``."""

    vectors: list = field(default_factory=list)

    @property
    def dimension(self):
        return len(self.vectors)


def tangent_basis(model, w0):
    w0 = _as_vector(w0, "w0")
    if not np.any(w0):
        raise ValueError("w0 must be nonzero")
    rows = [model.sigma @ w0]
    if np.linalg.norm(model.mu) > 0:
        rows.insert(0, model.mu)
    c = np.array([r / np.linalg.norm(r) for r in rows])
    _, sv, vt = np.linalg.svd(c)
    rank = int(np.sum(sv > RANK_TOL * sv[0]))
    return TangentBasis([vt[i].copy() for i in range(rank, vt.shape[0])])


def in_tangent_space(model, w0, h, tol=TANGENT_TOL):
    h = np.asarray(h, dtype=float)
    hn = np.linalg.norm(h)
    sw = model.sigma @ np.asarray(w0, dtype=float)
    ok_mu = abs(h @ model.mu) <= tol * hn * np.linalg.norm(model.mu)
    ok_sw = abs(h @ sw) <= tol * hn * np.linalg.norm(sw)
    return bool(ok_mu and ok_sw)


@dataclass(frozen=True)
class FirstOrderCheck:
    lhs: float
    rhs: float
    residual: float


def first_order_check(model, w0, alpha, h, eps, delta):
    """Compare ``F(w0 + eps h, q0 + delta) - alpha`` with ``delta f_{w0}(q0)``.

    For tangent ``h`` the direction contributes nothing at first order, so
    the residual is a second-order remainder in ``(eps, delta)``.
    """
    if not in_tangent_space(model, w0, h):
        raise ValueError("h is not in the tangent space at w0")
    w0 = _as_vector(w0, "w0")
    h = _as_vector(h, "h")
    q0 = population_quantile(model, w0, alpha)
    if eps == 0 and delta == 0:
        return FirstOrderCheck(0.0, 0.0, 0.0)
    lhs = population_cdf(model, w0 + eps * h, q0 + delta) - alpha
    rhs = delta * threshold_derivative(model, w0, q0)
    return FirstOrderCheck(float(lhs), float(rhs), float(lhs - rhs))
