"""Per-likelihood conditional updates and log-density evaluations.

Gaussian, Poisson, binomial, negative binomial, and multinomial
observation models share the linear-in-features structure psi = Phi B.
Logistic-family likelihoods are made conditionally Gaussian in the
mapping weights through Polya-gamma augmentation; the Poisson falls back
to elliptical slice sampling. Masked entries contribute nothing to any
likelihood sum, kappa, or Omega.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import expit, gammaln, logsumexp

from rflvm.samplers import EllipseState, _chol_with_jitter, crt_draw, \
    ess_update, pg_draw

KINDS = ("gaussian", "poisson", "binomial", "negative_binomial",
         "multinomial")
PG_KINDS = ("binomial", "negative_binomial", "multinomial")


@dataclass
class LikelihoodSpec:
    """Observation model and its likelihood-specific parameters."""
    kind: str
    sigma2: np.ndarray = None           # gaussian: per-feature noise variance
    a_sigma: float = 1.0
    b_sigma: float = 1.0
    trials: object = 1                  # binomial: scalar or (N, J) counts
    r: np.ndarray = None                # negative binomial dispersions
    a_r: float = 1.0
    b_r: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown likelihood kind {self.kind!r}")
        if self.sigma2 is not None:
            self.sigma2 = np.asarray(self.sigma2, dtype=float)
            if np.any(self.sigma2 <= 0):
                raise ValueError("noise variances must be positive")
        if self.r is not None:
            self.r = np.asarray(self.r, dtype=float)
            if np.any(self.r <= 0):
                raise ValueError("dispersions must be positive")

    @classmethod
    def gaussian(cls, n_features, sigma2=1.0, a_sigma=1.0, b_sigma=1.0):
        return cls(kind="gaussian",
                   sigma2=np.full(n_features, float(sigma2)),
                   a_sigma=a_sigma, b_sigma=b_sigma)

    @classmethod
    def poisson(cls):
        return cls(kind="poisson")

    @classmethod
    def binomial(cls, trials=1):
        return cls(kind="binomial", trials=trials)

    @classmethod
    def negative_binomial(cls, n_features, r=1.0, a_r=1.0, b_r=1.0):
        return cls(kind="negative_binomial",
                   r=np.full(n_features, float(r)), a_r=a_r, b_r=b_r)

    @classmethod
    def multinomial(cls):
        return cls(kind="multinomial")


@dataclass
class MappingWeights:
    """Per-feature coefficient vectors with their shared Gaussian prior."""
    B: np.ndarray                       # (M, J)
    beta0: np.ndarray = None            # (M,)
    B0: np.ndarray = None               # (M, M) SPD
    _b0_chol: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.B = np.asarray(self.B, dtype=float)
        m = self.B.shape[0]
        if self.beta0 is None:
            self.beta0 = np.zeros(m)
        if self.B0 is None:
            self.B0 = np.eye(m)
        self.beta0 = np.asarray(self.beta0, dtype=float)
        self.B0 = np.asarray(self.B0, dtype=float)

    @property
    def b0_chol(self):
        if self._b0_chol is None:
            self._b0_chol = _chol_with_jitter(self.B0, "weight prior")
        return self._b0_chol

    def prior_precision(self):
        ident = np.eye(self.B0.shape[0])
        inv_chol = solve_triangular(self.b0_chol, ident, lower=True)
        return inv_chol.T @ inv_chol


def linear_predictor(phi, weights):
    """psi = Phi B, the natural parameter for every observation model."""
    return phi @ weights.B


def _check_psi(psi):
    if not np.all(np.isfinite(psi)):
        i, j = np.argwhere(~np.isfinite(psi))[0]
        raise FloatingPointError(
            f"non-finite natural parameter at entry ({i}, {j})")


def _trials_matrix(spec, data):
    return np.broadcast_to(np.asarray(spec.trials, dtype=float),
                           data.Y.shape)


def log_likelihood(phi, weights, spec, data, psi=None, include_const=True):
    """Total log-density over the observed entries.

    The natural parameter is psi_ij = phi_i . beta_j with the canonical
    link for `spec.kind`. Masked entries are excluded. Raises on a
    non-finite psi; may return -inf when a finite psi overflows the link.
    `include_const=False` drops the terms that do not involve psi, which
    cancel in Metropolis ratios and slice thresholds.
    """
    if psi is None:
        psi = linear_predictor(phi, weights)
    _check_psi(psi)
    y, mask = data.Y, data.mask
    with np.errstate(over="ignore"):
        if spec.kind == "gaussian":
            ll = -0.5 * (y - psi) ** 2 / spec.sigma2
            if include_const:
                ll = ll - 0.5 * np.log(2.0 * np.pi * spec.sigma2)
        elif spec.kind == "poisson":
            ll = y * psi - np.exp(psi)
            if include_const:
                ll = ll - gammaln(y + 1.0)
        elif spec.kind == "binomial":
            n = _trials_matrix(spec, data)
            ll = y * psi - n * np.logaddexp(0.0, psi)
            if include_const:
                ll = ll + gammaln(n + 1.0) - gammaln(y + 1.0) \
                    - gammaln(n - y + 1.0)
        elif spec.kind == "negative_binomial":
            r = spec.r
            ll = y * psi - (y + r) * np.logaddexp(0.0, psi)
            if include_const:
                ll = ll + gammaln(y + r) - gammaln(r) - gammaln(y + 1.0)
        elif spec.kind == "multinomial":
            lse = logsumexp(psi, axis=1, keepdims=True)
            ll = y * (psi - lse)
            total = float(np.where(mask, ll, 0.0).sum())
            if include_const:
                tot = np.where(mask, y, 0.0).sum(axis=1)
                total += float(gammaln(tot + 1.0).sum()
                               - np.where(mask, gammaln(y + 1.0), 0.0).sum())
            return total
        else:  # pragma: no cover
            raise ValueError(spec.kind)
    return float(np.where(mask, ll, 0.0).sum())


def gaussian_marginal_loglik(phi, spec, data, beta0=None, B0=None,
                             sigma_scaled_prior=False):
    """Gaussian log-likelihood with the mapping weights integrated out.

    Computes sum_j log N(y_j | Phi beta0, Phi B0 Phi^T + sigma_j^2 I)
    over each column's observed rows, through an M-rank factorization so
    the cost is O(N M^2) rather than O(N^3). With `sigma_scaled_prior`
    the prior covariance is sigma_j^2 B0 (weight prior tied to the noise
    scale).
    """
    if spec.kind != "gaussian":
        raise ValueError("gaussian_marginal_loglik requires a gaussian spec")
    m = phi.shape[1]
    beta0 = np.zeros(m) if beta0 is None else np.asarray(beta0, dtype=float)
    B0 = np.eye(m) if B0 is None else np.asarray(B0, dtype=float)
    b0_chol = _chol_with_jitter(B0, "weight prior")
    logdet_b0 = 2.0 * np.sum(np.log(np.diag(b0_chol)))
    inv_chol = solve_triangular(b0_chol, np.eye(m), lower=True)
    b0_inv = inv_chol.T @ inv_chol
    total = 0.0
    for j in range(data.n_features):
        obs = data.mask[:, j]
        phi_o = phi[obs]
        resid = data.Y[obs, j] - phi_o @ beta0
        n_obs = phi_o.shape[0]
        s2 = spec.sigma2[j]
        gram = phi_o.T @ phi_o
        if sigma_scaled_prior:
            middle = (b0_inv + gram) / s2
            logdet_prior = logdet_b0 + m * np.log(s2)
        else:
            middle = b0_inv + gram / s2
            logdet_prior = logdet_b0
        mid_chol = _chol_with_jitter(middle, "marginal middle matrix")
        proj = solve_triangular(mid_chol, phi_o.T @ resid, lower=True)
        quad = (resid @ resid - proj @ proj / s2) / s2
        logdet = (n_obs * np.log(s2) + logdet_prior
                  + 2.0 * np.sum(np.log(np.diag(mid_chol))))
        total += -0.5 * (n_obs * np.log(2.0 * np.pi) + logdet + quad)
    return float(total)


def update_sigma(resid, mask, a_sigma, b_sigma, rng):
    """Conjugate inverse-gamma draw of per-feature noise variances.

    sigma_j^2 ~ IG(a + N_j / 2, b + sum of squared observed residuals / 2).
    """
    n_obs = mask.sum(axis=0)
    rss = np.where(mask, resid ** 2, 0.0).sum(axis=0)
    shape = a_sigma + 0.5 * n_obs
    rate = b_sigma + 0.5 * rss
    return rate / rng.gamma(shape)


def pg_ab_mapping(spec, data):
    """(a, b) matrices for the Polya-gamma representation.

    binomial: a = y, b = trials; negative binomial: a = y, b = y + r_j;
    multinomial: a = y, b = observed row totals. kappa = a - b/2 follows.
    """
    if spec.kind not in PG_KINDS:
        raise ValueError(
            f"Polya-gamma mapping undefined for {spec.kind!r} likelihood")
    y = data.Y
    if spec.kind == "binomial":
        a, b = y, _trials_matrix(spec, data).copy()
    elif spec.kind == "negative_binomial":
        a, b = y, y + spec.r[None, :]
    else:
        tot = np.where(data.mask, y, 0.0).sum(axis=1, keepdims=True)
        a, b = y, np.broadcast_to(tot, y.shape).copy()
    return a, b


def pg_kappa(spec, data):
    """kappa = (a - b/2) with masked entries zeroed."""
    a, b = pg_ab_mapping(spec, data)
    return np.where(data.mask, a - 0.5 * b, 0.0)


def draw_pg_aux(phi, weights, spec, data, rng, xi=None, psi=None):
    """Draw the Polya-gamma matrix Omega given the current weights.

    omega_ij ~ PG(b_ij, psi_ij - xi_ij); entries with b = 0 or masked
    entries are exactly 0.
    """
    if psi is None:
        psi = linear_predictor(phi, weights)
    _, b = pg_ab_mapping(spec, data)
    tilt = psi if xi is None else psi - xi
    b_eff = np.where(data.mask, b, 0.0)
    return pg_draw(b_eff, tilt, rng)


def update_beta_pg(phi, omega_j, kappa_j, weights, rng, xi_j=None):
    """Conjugate Gaussian draw of one coefficient vector given Omega.

    V = (Phi^T Omega_j Phi + B0^-1)^-1 and
    m = V (Phi^T (kappa_j + Omega_j xi_j) + B0^-1 beta0); xi enters only
    for the multinomial likelihood.
    """
    b0_inv = weights.prior_precision()
    prec = phi.T @ (omega_j[:, None] * phi) + b0_inv
    rhs = kappa_j if xi_j is None else kappa_j + omega_j * xi_j
    rhs = phi.T @ rhs + b0_inv @ weights.beta0
    chol = _chol_with_jitter(prec, "weight posterior precision")
    mean = cho_solve((chol, True), rhs)
    z = rng.standard_normal(mean.shape[0])
    return mean + solve_triangular(chol.T, z, lower=False)


def _column_loglik(phi, beta_j, spec, data, j):
    """Log-likelihood terms involving column j at coefficient beta_j."""
    psi_j = phi @ beta_j
    y = data.Y[:, j]
    obs = data.mask[:, j]
    with np.errstate(over="ignore"):
        if spec.kind == "gaussian":
            ll = -0.5 * (y - psi_j) ** 2 / spec.sigma2[j]
        elif spec.kind == "poisson":
            ll = y * psi_j - np.exp(psi_j)
        elif spec.kind == "binomial":
            n = np.broadcast_to(np.asarray(spec.trials, dtype=float),
                                data.Y.shape)[:, j]
            ll = y * psi_j - n * np.logaddexp(0.0, psi_j)
        elif spec.kind == "negative_binomial":
            ll = y * psi_j - (y + spec.r[j]) * np.logaddexp(0.0, psi_j)
        else:
            raise ValueError(
                "column log-likelihood undefined for multinomial; use the "
                "full-matrix form")
    return float(np.where(obs, ll, 0.0).sum())


def update_beta_generic(phi, spec, data, j, weights, rng):
    """One elliptical-slice transition of beta_j for non-conjugate kinds.

    Targets N(beta0, B0) times the column-j likelihood. Used for the
    Poisson likelihood and available as a fallback for any independent-
    column observation model.
    """
    if spec.kind == "multinomial":
        def loglik(beta):
            b_all = weights.B.copy()
            b_all[:, j] = beta
            stand_in = MappingWeights(B=b_all, beta0=weights.beta0,
                                      B0=weights.B0)
            return log_likelihood(phi, stand_in, spec, data)
    else:
        def loglik(beta):
            return _column_loglik(phi, beta, spec, data, j)
    state = EllipseState(current=weights.B[:, j], log_lik=loglik,
                         prior_mean=weights.beta0,
                         prior_factor=weights.b0_chol)
    return ess_update(state, rng)


def update_beta_gaussian(phi, spec, data, j, weights, rng, gram_full=None):
    """Conjugate Bayesian-linear-model draw of beta_j for Gaussian data.

    `gram_full` optionally carries Phi^T Phi over all rows; the column's
    gram is then obtained by downdating the missing rows, which is much
    cheaper than recomputing when few entries are masked.
    """
    obs = data.mask[:, j]
    s2 = spec.sigma2[j]
    if gram_full is not None:
        if obs.all():
            gram = gram_full
        else:
            phi_m = phi[~obs]
            gram = gram_full - phi_m.T @ phi_m
    else:
        phi_o = phi[obs]
        gram = phi_o.T @ phi_o
    b0_inv = weights.prior_precision()
    prec = gram / s2 + b0_inv
    rhs = phi.T @ np.where(obs, data.Y[:, j], 0.0) / s2 \
        + b0_inv @ weights.beta0
    chol = _chol_with_jitter(prec, "weight posterior precision")
    mean = cho_solve((chol, True), rhs)
    z = rng.standard_normal(mean.shape[0])
    return mean + solve_triangular(chol.T, z, lower=False)


def update_dispersion(y_j, p_j, obs_j, a_r, b_r, r_current, rng,
                      floor=1e-10):
    """Gamma draw of one negative-binomial dispersion.

    Augments with Chinese-restaurant-table counts L_j = sum_n CRT(y_nj,
    r_j), then draws r_j ~ Gamma(a_r + L_j, b_r - sum_n log(1 - p_nj))
    over the observed entries. 1 - p is floored to keep the rate finite.
    """
    y_obs = np.asarray(y_j)[obs_j].astype(np.int64)
    p_obs = np.asarray(p_j)[obs_j]
    ell = crt_draw(y_obs, r_current, rng).sum() if y_obs.size else 0
    one_minus_p = np.maximum(1.0 - p_obs, floor)
    rate = b_r - np.sum(np.log(one_minus_p))
    return rng.gamma(a_r + ell) / rate


def multinomial_xi(phi, weights, j, psi=None):
    """xi_ij = log sum_{j' != j} exp(psi_ij'), computed with a max shift."""
    if psi is None:
        psi = linear_predictor(phi, weights)
    others = np.delete(psi, j, axis=1)
    return logsumexp(others, axis=1)


def predictive_mean(phi, weights, spec, data=None, psi=None):
    """E[Y] under the current state, per entry.

    gaussian: psi; poisson: exp(psi); binomial: trials * logistic(psi);
    negative binomial: r p / (1 - p); multinomial: row total * softmax
    over the row (row totals taken from the observed data).
    """
    if psi is None:
        psi = linear_predictor(phi, weights)
    if spec.kind == "gaussian":
        return psi
    if spec.kind == "poisson":
        with np.errstate(over="ignore"):
            return np.exp(psi)
    if spec.kind == "binomial":
        if data is None:
            raise ValueError("binomial predictive mean needs data for trials")
        return _trials_matrix(spec, data) * expit(psi)
    if spec.kind == "negative_binomial":
        p = expit(psi)
        p = np.minimum(p, 1.0 - 1e-10)
        return spec.r[None, :] * p / (1.0 - p)
    if spec.kind == "multinomial":
        if data is None:
            raise ValueError("multinomial predictive mean needs row totals")
        tot = np.where(data.mask, data.Y, 0.0).sum(axis=1, keepdims=True)
        lse = logsumexp(psi, axis=1, keepdims=True)
        return tot * np.exp(psi - lse)
    raise ValueError(spec.kind)  # pragma: no cover
