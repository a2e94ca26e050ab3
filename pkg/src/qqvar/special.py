"""Special functions for the Student-t law.

The regularized incomplete beta function is evaluated with the modified
Lentz continued fraction, switching to the complementary form above the
pivot ``x > (a + 1) / (a + b + 2)`` where the fraction converges fastest.
"""

import math

_EPS = 1e-16
_TINY = 1e-300
_MAXIT = 500


def _betacf(a, b, x):
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(
        f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})"
    )


def _stirling_corr(x):
    # lgamma(x) - [(x - 1/2) log x - x + log(2 pi)/2], valid for x >= 10
    x2 = 1.0 / (x * x)
    return (1.0 / 12.0 - x2 * (1.0 / 360.0 - x2 * (1.0 / 1260.0 - x2 * (1.0 / 1680.0 - x2 / 1188.0)))) / x


def lbeta(a, b):
    """``log B(a, b)`` without the cancellation of three large lgammas."""
    small, big = (a, b) if a <= b else (b, a)
    if big < 10.0:
        return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    # lgamma(big + small) - lgamma(big) via Stirling differences
    ratio = (
        (big - 0.5) * math.log1p(small / big) + small * math.log(big + small) - small
        + _stirling_corr(big + small) - _stirling_corr(big)
    )
    return math.lgamma(small) - ratio


def betainc(a, b, x, y=None):
    """Regularized incomplete beta ``I_x(a, b)``.

    ``y`` may carry ``1 - x`` computed without cancellation by the caller;
    it is used on the complementary branch.
    """
    if a <= 0 or b <= 0:
        raise ValueError("betainc requires a > 0 and b > 0")
    if y is None:
        y = 1.0 - x
    if not (0.0 <= x <= 1.0) or not (0.0 <= y <= 1.0):
        raise ValueError(f"betainc argument out of [0, 1]: x={x}")
    if x == 0.0:
        return 0.0
    if y == 0.0:
        return 1.0
    log_x = math.log1p(-y) if x > 0.5 else math.log(x)
    log_y = math.log1p(-x) if y > 0.5 else math.log(y)
    log_front = -lbeta(a, b) + a * log_x + b * log_y
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, y) / b


def std_t_logpdf_const(nu):
    """log of the standard t_nu density at zero."""
    return -lbeta(0.5 * nu, 0.5) - 0.5 * math.log(nu)


def std_t_cdf(z, nu):
    """CDF of the standard Student-t with ``nu`` degrees of freedom."""
    if z == 0.0:
        return 0.5
    if math.isinf(z):
        return 1.0 if z > 0 else 0.0
    z2 = z * z
    denom = nu + z2
    # tail = P(T > |z|) = I_{nu/(nu+z^2)}(nu/2, 1/2) / 2
    tail = 0.5 * betainc(0.5 * nu, 0.5, nu / denom, z2 / denom)
    return 1.0 - tail if z > 0 else tail


def std_t_sf(z, nu):
    return std_t_cdf(-z, nu)


def std_t_ppf(alpha, nu, tol=1e-12, maxiter=200):
    """Quantile of the standard t_nu via Newton steps guarded by bisection."""
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if alpha == 0.5:
        return 0.0
    if alpha < 0.5:
        return -std_t_ppf(1.0 - alpha, nu, tol, maxiter)

    # bracket [lo, hi] with cdf(lo) < alpha <= cdf(hi)
    lo, hi = 0.0, 1.0
    while std_t_cdf(hi, nu) < alpha:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise ArithmeticError("failed to bracket t quantile")
    log_c = std_t_logpdf_const(nu)
    x = 0.5 * (lo + hi)
    for _ in range(maxiter):
        resid = std_t_cdf(x, nu) - alpha
        if abs(resid) <= tol * min(alpha, 1.0 - alpha) or hi - lo <= 4e-16 * hi:
            return x
        if resid > 0:
            hi = x
        else:
            lo = x
        dens = math.exp(log_c - 0.5 * (nu + 1.0) * math.log1p(x * x / nu))
        step = x - resid / dens if dens > 0 else lo - 1.0
        x = step if lo < step < hi else 0.5 * (lo + hi)
    return x
