"""Reusable exact samplers and density helpers.

Polya-gamma draws, elliptical slice sampling, Chinese-restaurant-table
counts, normal-inverse-Wishart draws, and the NIW marginal (multivariate
Student-t) density. All samplers are deterministic functions of their
inputs and the supplied random generator.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.special import gammaln


def _pg_weights(c, trunc):
    """Series denominators (k - 1/2)^2 + c^2/(4 pi^2) for k = 1..trunc."""
    ks = (np.arange(1, trunc + 1) - 0.5) ** 2
    c = np.asarray(c, dtype=float)
    return ks + (c[..., None] ** 2) / (4.0 * np.pi ** 2)


def pg_mean(b, c):
    """Closed-form mean of PG(b, c): (b / 2c) tanh(c / 2), b/4 at c = 0."""
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    out = np.where(np.abs(c) < 1e-8,
                   b / 4.0 - b * c ** 2 / 48.0,
                   b / (2.0 * np.where(c == 0, 1.0, c))
                   * np.tanh(np.clip(c, -700, 700) / 2.0))
    return out


def pg_var(b, c):
    """Closed-form variance of PG(b, c); b/24 at c = 0."""
    b = np.asarray(b, dtype=float)
    c = np.abs(np.asarray(c, dtype=float))
    small = c < 1e-4
    cs = np.where(small, 1.0, c)
    v = b / (4.0 * cs ** 3) * (np.sinh(cs) - cs) / np.cosh(cs / 2.0) ** 2
    return np.where(small, b / 24.0, v)


def pg_draw(b, c, rng, trunc=200):
    """Draw from the Polya-gamma distribution PG(b, c).

    The infinite weighted sum of Gamma(b, 1) variables is truncated at
    `trunc` terms; the analytic mean of the discarded tail is added back
    as a deterministic correction, so the sample mean is exact. Entries
    with b = 0 are returned as exactly 0.

    Parameters
    ----------
    b : float or ndarray, >= 0
    c : float or ndarray, broadcastable against b
    rng : numpy.random.Generator
    """
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    if np.any(b < 0):
        raise ValueError("pg_draw requires b >= 0")
    b, c = np.broadcast_arrays(b, c)
    shape = b.shape
    b = np.atleast_1d(b)
    c = np.atleast_1d(c)
    denom = _pg_weights(c, trunc)                      # (..., trunc)
    gam = rng.gamma(np.broadcast_to(b[..., None], denom.shape))
    omega = np.sum(gam / denom, axis=-1) / (2.0 * np.pi ** 2)
    # tail correction: full mean minus mean of the retained terms
    trunc_mean = np.sum(1.0 / denom, axis=-1) / (2.0 * np.pi ** 2) * b
    omega += pg_mean(b, c) - trunc_mean
    omega = np.where(b > 0, omega, 0.0)
    return omega.reshape(shape) if shape else float(omega[0])


@dataclass
class EllipseState:
    """One elliptical-slice-sampling target.

    The prior on `current` is N(prior_mean, L L^T) where L is the
    lower-triangular `prior_factor` (None means the identity).
    `log_lik` maps a parameter vector to a log-likelihood and must be
    deterministic given its argument.
    """
    current: np.ndarray
    log_lik: object
    prior_mean: np.ndarray = None
    prior_factor: object = None


def _factor_apply(factor, u):
    if factor is None:
        return u
    if hasattr(factor, "apply"):
        return factor.apply(u)
    return factor @ u


def ess_update(state, rng, min_bracket=1e-12):
    """One elliptical slice sampling transition.

    Draws an auxiliary point from the prior, thresholds the current
    log-likelihood, and shrinks the angle bracket until a point on the
    ellipse is accepted. Leaves the posterior prior x likelihood
    invariant and always moves for continuous priors.

    Returns the new parameter vector.
    """
    x = np.asarray(state.current, dtype=float)
    mean = state.prior_mean
    if mean is None:
        mean = np.zeros_like(x)
    ll_cur = state.log_lik(x)
    if not np.isfinite(ll_cur):
        raise ValueError("ess_update requires a finite log-likelihood at "
                         "the current state")
    nu = _factor_apply(state.prior_factor, rng.standard_normal(x.shape))
    log_y = ll_cur + np.log(rng.uniform())
    theta = rng.uniform(0.0, 2.0 * np.pi)
    lo, hi = theta - 2.0 * np.pi, theta
    centered = x - mean
    while True:
        cand = centered * np.cos(theta) + nu * np.sin(theta) + mean
        if state.log_lik(cand) > log_y:
            return cand
        if theta < 0:
            lo = theta
        else:
            hi = theta
        if hi - lo < min_bracket:
            raise RuntimeError(
                "elliptical slice bracket collapsed; log_lik is likely "
                "non-finite or inconsistent")
        theta = rng.uniform(lo, hi)


def crt_draw(y, r, rng):
    """Chinese restaurant table count for y customers and weight r.

    Returns sum_{t=1..y} Bernoulli(r / (r + t - 1)), the number of
    occupied tables. y may be a scalar or array of nonnegative integers.
    """
    y_arr = np.asarray(y)
    if np.any(y_arr < 0):
        raise ValueError("crt_draw requires y >= 0")
    if r <= 0:
        raise ValueError("crt_draw requires r > 0")
    scalar = y_arr.ndim == 0
    y_arr = np.atleast_1d(y_arr).astype(np.int64)
    y_max = int(y_arr.max()) if y_arr.size else 0
    if y_max == 0:
        out = np.zeros_like(y_arr)
        return int(out[0]) if scalar else out
    t = np.arange(y_max, dtype=float)                 # t - 1 for t = 1..y
    probs = r / (r + t)
    u = rng.uniform(size=(y_arr.size, y_max))
    active = t[None, :] < y_arr[:, None]
    out = np.sum((u < probs[None, :]) & active, axis=1)
    return int(out[0]) if scalar else out


@dataclass
class NIWParams:
    """Normal-inverse-Wishart parameters (mu0, lam0, nu0, psi0)."""
    mu0: np.ndarray
    lam0: float
    nu0: float
    psi0: np.ndarray

    def __post_init__(self):
        self.mu0 = np.asarray(self.mu0, dtype=float)
        self.psi0 = np.asarray(self.psi0, dtype=float)
        d = self.mu0.shape[0]
        if self.lam0 <= 0:
            raise ValueError("lam0 must be positive")
        if self.nu0 <= d - 1:
            raise ValueError("nu0 must exceed D - 1")

    @property
    def dim(self):
        return self.mu0.shape[0]


def _chol_with_jitter(a, name="matrix"):
    """Lower Cholesky factor, retrying once with 1e-8 jitter on failure."""
    try:
        return cholesky(a, lower=True)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-8 * np.eye(a.shape[0])
    try:
        return cholesky(a + jitter, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"{name} is not positive definite even after jitter") from exc


def invwishart_draw(psi, nu, rng):
    """Draw from the inverse-Wishart distribution IW(psi, nu)."""
    psi = np.asarray(psi, dtype=float)
    d = psi.shape[0]
    # Bartlett decomposition of W(psi^-1, nu), then invert.
    chol_psi = _chol_with_jitter(psi, "inverse-Wishart scale")
    a = np.zeros((d, d))
    idx = np.tril_indices(d, -1)
    a[idx] = rng.standard_normal(len(idx[0]))
    a[np.diag_indices(d)] = np.sqrt(
        rng.chisquare(nu - np.arange(d)))
    # W = L^-T A^-T A^-1 L^-1 has distribution W(psi^-1, nu) inverted:
    # Sigma = psi_chol @ (A A^T)^-1 @ psi_chol^T
    inv_a = solve_triangular(a, np.eye(d), lower=True)
    inner = inv_a.T @ inv_a
    sigma = chol_psi @ inner @ chol_psi.T
    return 0.5 * (sigma + sigma.T)


def niw_draw(params, rng):
    """Draw (mu, Sigma) from a normal-inverse-Wishart distribution.

    Sigma ~ IW(psi, nu); mu | Sigma ~ N(mu0, Sigma / lam0).
    """
    sigma = invwishart_draw(params.psi0, params.nu0, rng)
    chol_sig = _chol_with_jitter(sigma, "NIW covariance draw")
    mu = params.mu0 + (chol_sig @ rng.standard_normal(params.dim)) \
        / np.sqrt(params.lam0)
    return mu, sigma


def mvn_logpdf(x, mean, chol_cov):
    """Multivariate normal log-density given a lower Cholesky factor."""
    dev = np.atleast_2d(x) - mean
    sol = solve_triangular(chol_cov, dev.T, lower=True)
    d = mean.shape[0]
    out = -0.5 * (d * np.log(2.0 * np.pi) + np.sum(sol ** 2, axis=0)) \
        - np.sum(np.log(np.diag(chol_cov)))
    return out if np.asarray(x).ndim > 1 else float(out[0])


def mvt_logpdf(x, df, loc, scale):
    """Multivariate Student-t log-density with scale matrix `scale`."""
    loc = np.asarray(loc, dtype=float)
    d = loc.shape[0]
    chol_s = _chol_with_jitter(np.asarray(scale, dtype=float), "t scale")
    dev = np.atleast_2d(x) - loc
    sol = solve_triangular(chol_s, dev.T, lower=True)
    quad = np.sum(sol ** 2, axis=0)
    out = (gammaln((df + d) / 2.0) - gammaln(df / 2.0)
           - 0.5 * d * np.log(df * np.pi)
           - np.sum(np.log(np.diag(chol_s)))
           - 0.5 * (df + d) * np.log1p(quad / df))
    return out if np.asarray(x).ndim > 1 else float(out[0])


def niw_marginal_logpdf(w, params):
    """Log-density of w with (mu, Sigma) integrated out under the NIW prior.

    Equals a multivariate Student-t with nu0 - D + 1 degrees of freedom,
    location mu0, and scale psi0 (lam0 + 1) / (lam0 (nu0 - D + 1)).
    """
    d = params.dim
    df = params.nu0 - d + 1.0
    scale = params.psi0 * (params.lam0 + 1.0) / (params.lam0 * df)
    return mvt_logpdf(w, df, params.mu0, scale)


def niw_marginal_density(w, params):
    """Density version of :func:`niw_marginal_logpdf`."""
    return np.exp(niw_marginal_logpdf(w, params))
