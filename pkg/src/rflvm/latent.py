"""Priors over the latent matrix and their slice-sampling updates.

The latent rows either carry independent unit Gaussian priors or, in
dynamic mode, each latent dimension is a Gaussian process over the time
index, approximated through a small set of inducing points as a low-rank
plus diagonal covariance. Both cases expose an invertible factor F with
F F^T equal to the prior covariance, supporting draws, whitening, and
solves in O(N C^2).
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from rflvm.samplers import EllipseState, ess_update

logger = logging.getLogger(__name__)


@dataclass
class IIDPrior:
    """Independent N(0, 1) prior on every latent coordinate."""
    dim: int


@dataclass
class DynamicPrior:
    """Per-dimension GP-over-time prior with inducing-point approximation."""
    dim: int
    time: np.ndarray
    log_lengthscale: float = np.log(0.2)
    log_variance: float = 0.0
    n_inducing: int = 25
    jitter: float = 1e-6

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        if np.any(np.diff(self.time) < 0):
            raise ValueError("time index must be nondecreasing")
        span = self.time.max() - self.time.min()
        if span <= 0:
            raise ValueError("time index must span a positive range")
        # internal coordinates on [0, 1]; hyperpriors are scale-free there
        self._t01 = (self.time - self.time.min()) / span
        self.n_inducing = min(self.n_inducing, self.time.size)


@dataclass
class LatentState:
    """Latent matrix plus its prior specification."""
    X: np.ndarray
    prior: object

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if not np.all(np.isfinite(self.X)):
            raise ValueError("latent matrix must be finite")


class IdentityFactor:
    """Trivial factor for the iid prior."""

    def __init__(self, n):
        self.n = n

    def apply(self, u):
        return np.asarray(u, dtype=float)

    def solve(self, x):
        return np.asarray(x, dtype=float)

    def draw(self, rng, size=None):
        shape = (self.n,) if size is None else (self.n, size)
        return rng.standard_normal(shape)

    def covariance(self):
        return np.eye(self.n)


class LowRankFactor:
    """Invertible square root of a low-rank-plus-diagonal covariance.

    Given K = A A^T + diag(lam), builds F with F F^T = K using the thin
    SVD of diag(lam)^{-1/2} A, so apply/solve cost O(N C) after an
    O(N C^2) setup. apply/solve accept vectors or column-stacked
    matrices.
    """

    def __init__(self, a, lam):
        self.lam_sqrt = np.sqrt(lam)
        b = a / self.lam_sqrt[:, None]
        u, s, _ = np.linalg.svd(b, full_matrices=False)
        self.u = u
        self.scale = np.sqrt(1.0 + s ** 2)

    @property
    def n(self):
        return self.u.shape[0]

    def _columnwise(self, v, fn):
        v = np.asarray(v, dtype=float)
        flat = v.ndim == 1
        v2 = v[:, None] if flat else v
        out = fn(v2)
        return out[:, 0] if flat else out

    def apply(self, u_vec):
        def fn(v):
            proj = self.u.T @ v
            return self.lam_sqrt[:, None] * (
                v + self.u @ ((self.scale - 1.0)[:, None] * proj))
        return self._columnwise(u_vec, fn)

    def solve(self, x):
        def fn(v):
            y = v / self.lam_sqrt[:, None]
            proj = self.u.T @ y
            return y + self.u @ ((1.0 / self.scale - 1.0)[:, None] * proj)
        return self._columnwise(x, fn)

    def draw(self, rng, size=None):
        shape = (self.n,) if size is None else (self.n, size)
        return self.apply(rng.standard_normal(shape))

    def covariance(self):
        root = self.lam_sqrt[:, None] * (
            np.eye(self.n) + self.u @ np.diag(self.scale - 1.0) @ self.u.T)
        return root @ root.T


def _rbf(t1, t2, lengthscale, variance):
    d2 = (t1[:, None] - t2[None, :]) ** 2
    return variance * np.exp(-d2 / (2.0 * lengthscale ** 2))


def prior_factor(prior, n=None):
    """Factorization of the latent prior covariance.

    iid -> identity (n gives the vector length). Dynamic -> subset-of-
    regressors through the inducing grid with a diagonal correction and
    jitter, returned as an invertible low-rank-plus-diagonal factor.
    """
    if isinstance(prior, IIDPrior):
        if n is None:
            raise ValueError("the iid prior factor needs the number of rows")
        return IdentityFactor(n)
    return _dynamic_factor(prior, np.exp(prior.log_lengthscale),
                           np.exp(prior.log_variance))


def _dynamic_factor(prior, lengthscale, variance):
    t = prior._t01
    c = prior.n_inducing
    inducing = np.linspace(t.min(), t.max(), c)
    k_cc = _rbf(inducing, inducing, lengthscale, variance)
    k_nc = _rbf(t, inducing, lengthscale, variance)
    bump = 1e-10 * variance
    for attempt in range(2):
        try:
            chol_cc = cholesky(k_cc + bump * np.eye(c), lower=True)
            break
        except np.linalg.LinAlgError:
            if attempt == 1:
                raise
            bump = 1e-6 * variance
    a = solve_triangular(chol_cc, k_nc.T, lower=True).T   # (N, C)
    q_diag = np.sum(a ** 2, axis=1)
    lam = np.maximum(variance - q_diag, 0.0) + prior.jitter
    return LowRankFactor(a, lam)


def standardize_latent(x):
    """Center each column to mean 0 and scale to unit variance.

    Zero-variance columns are centered only, with a warning. Applied after
    every latent update as an identifiability control; the sampler
    re-adapts the remaining parameters.
    """
    x = np.asarray(x, dtype=float)
    centered = x - x.mean(axis=0, keepdims=True)
    sd = centered.std(axis=0, keepdims=True)
    degenerate = sd[0] == 0.0
    if np.any(degenerate):
        logger.warning("zero-variance latent column; centering only")
        sd = np.where(degenerate, 1.0, sd)
    return centered / sd


def update_latent(state, log_lik, rng):
    """One elliptical-slice transition of the latent matrix.

    iid prior: a single joint transition over vec(X). Dynamic prior: one
    transition per latent dimension under its GP factor. `log_lik` maps a
    candidate X matrix to the data log-likelihood.
    """
    x = state.X
    n, d = x.shape
    if isinstance(state.prior, IIDPrior):
        ess = EllipseState(
            current=x.ravel(),
            log_lik=lambda v: log_lik(v.reshape(n, d)))
        return ess_update(ess, rng).reshape(n, d)
    factor = prior_factor(state.prior)
    x_new = x.copy()
    for dim in range(d):
        def loglik_col(col, dim=dim):
            cand = x_new.copy()
            cand[:, dim] = col
            return log_lik(cand)
        ess = EllipseState(current=x_new[:, dim], log_lik=loglik_col,
                           prior_factor=factor)
        x_new[:, dim] = ess_update(ess, rng)
    return x_new


def update_gp_hypers(state, log_lik, rng, prior_sd=1.5):
    """Whitened elliptical-slice update of (log lengthscale, log variance).

    The whitened coordinates u = F^{-1} x_d are held fixed while the
    hyperparameters move under independent N(0, prior_sd^2) priors; the
    likelihood is evaluated at X rebuilt from the candidate factor. A
    candidate whose factor cannot be built is treated as log-likelihood
    -inf, so the bracket shrinks away from it. Returns the new X.
    """
    prior = state.prior
    if not isinstance(prior, DynamicPrior):
        raise ValueError("GP hyperparameter update requires a dynamic prior")
    factor = prior_factor(prior)
    u = factor.solve(state.X)

    def loglik_h(h):
        try:
            cand = _dynamic_factor(prior, np.exp(h[0]), np.exp(h[1]))
        except np.linalg.LinAlgError:
            return -np.inf
        x_cand = cand.apply(u)
        if not np.all(np.isfinite(x_cand)):
            return -np.inf
        return log_lik(x_cand)

    current = np.array([prior.log_lengthscale, prior.log_variance])
    ess = EllipseState(current=current, log_lik=loglik_h,
                       prior_factor=prior_sd * np.eye(2))
    h_new = ess_update(ess, rng)
    prior.log_lengthscale = float(h_new[0])
    prior.log_variance = float(h_new[1])
    return prior_factor(prior).apply(u)
