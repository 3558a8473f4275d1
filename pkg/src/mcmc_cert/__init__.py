"""Curvature-based error certificates for MCMC empirical means."""
from .core import (
    EuclideanSpace, FiniteDistribution, FiniteMetricSpace, LipschitzObservable, MarkovKernel,
    averaged_observable, iterate_kernel, lipschitz_constant, total_variation,
)
from .transport import kantorovich_dual, wasserstein1
from .diagnostics import (
    CurvatureReport, DiagnosticsBundle, SSpec, coarse_ricci, diagnose, diffusion_constant,
    eccentricity, eccentricity_apriori, granularity, local_dimension_lower, stationary_dist,
)
from .bounds import (
    BoundCertificate, RunPlan, bias_bound, concentration_S, concentration_uniform,
    confidence_radius, mse_decomposition, random_start_variance, variance_bound_S,
    variance_bound_uniform,
)
from . import chains, errors

__version__ = "0.1.0"

__all__ = [
    "EuclideanSpace", "FiniteDistribution", "FiniteMetricSpace", "LipschitzObservable",
    "MarkovKernel", "averaged_observable", "iterate_kernel", "lipschitz_constant",
    "total_variation", "kantorovich_dual", "wasserstein1", "CurvatureReport",
    "DiagnosticsBundle", "SSpec", "coarse_ricci", "diagnose", "diffusion_constant",
    "eccentricity", "eccentricity_apriori", "granularity", "local_dimension_lower",
    "stationary_dist", "BoundCertificate", "RunPlan", "bias_bound", "concentration_S",
    "concentration_uniform", "confidence_radius", "mse_decomposition", "random_start_variance",
    "variance_bound_S", "variance_bound_uniform", "chains", "errors",
]
