"""Kernel regression for locally stationary time series."""

from .backfit import BackfitConfig, BackfitResult, backfit_fit, backfit_solve, pilot_estimates
from .estimator import nw_estimate, nw_surface, sup_error
from .kernel import EPANECHNIKOV, Kernel, boundary_weight, compute_moments, get_kernel
from .process import TriangularSample, TvNarModel, coupled_paths, coupling_report, simulate_frozen, simulate_tvnar

__all__ = [
    "BackfitConfig",
    "BackfitResult",
    "EPANECHNIKOV",
    "Kernel",
    "TriangularSample",
    "TvNarModel",
    "backfit_fit",
    "backfit_solve",
    "boundary_weight",
    "compute_moments",
    "coupled_paths",
    "coupling_report",
    "get_kernel",
    "nw_estimate",
    "nw_surface",
    "pilot_estimates",
    "simulate_frozen",
    "simulate_tvnar",
    "sup_error",
]
