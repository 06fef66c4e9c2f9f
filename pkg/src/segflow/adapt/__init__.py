"""Anisotropic error estimation, optimal metrics and metric-based remeshing."""

from .estimator import (EstimateReport, compute_G, compute_G_all, estimate, local_estimate,
                        local_estimate_rescaled, recover_gradient)
from .metric import optimal_anisotropy, optimal_metric, relax_metric, vertex_metric
from .remesh import RemeshOptions, RemeshResult, remesh
from .driver import AdaptConfig, MeshAdapter, run_split_adapt_bregman
