"""Geometric power analysis for general log-linear models."""

__version__ = "0.1.0"

from .design import (  # noqa: E402
    DesignMatrix,
    Distribution,
    KernelBasis,
    ModelSpec,
    canonical_params,
    kernel_basis,
    l1_normalize,
    mean_value_params,
    validate_design,
)
from .gof import (  # noqa: E402
    GofReport,
    central_chi2_cdf,
    central_chi2_quantile,
    classical_power,
    deviance_g2,
    noncentral_chi2_cdf,
    noncentrality,
    pearson_x2,
)
from .scaling import (  # noqa: E402
    FitResult,
    ScalingConfig,
    bregman_divergence,
    g_ipf,
    ipf_gamma_xi,
    ipf_step,
    mle,
)
