"""Q-Q orthogonality decomposition of projected Value-at-Risk under
multivariate Student-t returns."""

__version__ = "0.1.0"

from .dist import (  # noqa: E402
    MvtModel,
    ProjectedT,
    ReturnSample,
    population_quantile,
    project_loss,
    quantile_gradient,
    sample_mvt,
    t_cdf,
    t_pdf,
    t_quantile,
)
from .decomposition import QQDecomposition, compute  # noqa: E402

__all__ = [
    "MvtModel",
    "ProjectedT",
    "ReturnSample",
    "QQDecomposition",
    "compute",
    "population_quantile",
    "project_loss",
    "quantile_gradient",
    "sample_mvt",
    "t_cdf",
    "t_pdf",
    "t_quantile",
]
