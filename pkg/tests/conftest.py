import math

import numpy as np
import pytest
from scipy import integrate

from qqvar.dist import MvtModel


def t_density_oracle(x, nu):
    """Standard t density from its normalizing constant, independent of the package."""
    c = math.gamma((nu + 1) / 2) / (math.gamma(nu / 2) * math.sqrt(nu * math.pi))
    return c * (1 + x * x / nu) ** (-(nu + 1) / 2)


def t_cdf_oracle(x, nu):
    val, _ = integrate.quad(t_density_oracle, 0.0, x, args=(nu,), epsabs=1e-14, epsrel=1e-13,
                            limit=200)
    return 0.5 + val


@pytest.fixture
def study_model():
    """p=5, unit diagonal, off-diagonal 0.5, nu=10."""
    return MvtModel.equicorrelated(5, 0.5, 10.0)


@pytest.fixture
def w_equal():
    return np.full(5, 0.2)


@pytest.fixture
def shifted_model():
    sigma = np.array([
        [1.0, 0.3, 0.1, 0.0],
        [0.3, 2.0, 0.4, 0.2],
        [0.1, 0.4, 1.5, 0.3],
        [0.0, 0.2, 0.3, 0.8],
    ])
    return MvtModel(np.array([0.1, -0.2, 0.05, 0.3]), sigma, 6.0)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in criterion order."""
    lines = []
    for reports in terminalreporter.stats.values():
        for rep in reports:
            if getattr(rep, "when", None) != "call":
                continue
            for key, value in getattr(rep, "user_properties", []):
                if key == "criterion":
                    lines.append(value)
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, text in sorted(lines):
            terminalreporter.write_line(text)
