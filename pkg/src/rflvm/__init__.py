"""Bayesian nonlinear latent variable models with random Fourier feature kernels."""

from rflvm.rff import compute_features, approx_kernel_matrix
from rflvm.samplers import (EllipseState, NIWParams, crt_draw, ess_update,
                            niw_draw, niw_marginal_density, pg_draw)
from rflvm.dp import FeatureBasis, init_basis

__all__ = [
    "compute_features", "approx_kernel_matrix",
    "EllipseState", "NIWParams", "crt_draw", "ess_update", "niw_draw",
    "niw_marginal_density", "pg_draw",
    "FeatureBasis", "init_basis",
]
