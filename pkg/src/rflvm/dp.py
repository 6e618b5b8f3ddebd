"""Dirichlet process mixture prior over random frequencies.

The random frequencies of the feature map are modeled as draws from an
infinite Gaussian mixture with normal-inverse-Wishart base measure. Gibbs
updates operate on cluster assignments, per-cluster parameters, and the
concentration parameter; a Metropolis step resamples individual
frequencies from their cluster's conditional prior, accepting on the data
likelihood ratio.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from rflvm.samplers import (NIWParams, _chol_with_jitter, mvn_logpdf,
                            niw_draw, niw_marginal_logpdf)

logger = logging.getLogger(__name__)


def default_niw(d):
    """Weakly informative NIW hyperparameters for D-dimensional frequencies."""
    return NIWParams(mu0=np.zeros(d), lam0=1.0, nu0=d + 2.0, psi0=np.eye(d))


@dataclass
class FeatureBasis:
    """Random-frequency matrix with its mixture state.

    W has one row per (sin, cos) feature pair. z assigns each row to an
    instantiated cluster; `means` and `covs` hold the per-cluster Gaussian
    parameters, indexed by cluster label. Every instantiated cluster has
    at least one member.
    """
    W: np.ndarray                       # (M/2, D)
    z: np.ndarray                       # (M/2,) int labels into means/covs
    means: list                         # K arrays of shape (D,)
    covs: list                          # K arrays of shape (D, D)
    alpha: float
    niw: NIWParams
    alpha_shape: float = 1.0
    alpha_rate: float = 1.0
    eta: float = 0.5
    _chols: list = field(default_factory=list, repr=False)

    @property
    def n_freq(self):
        return self.W.shape[0]

    @property
    def dim(self):
        return self.W.shape[1]

    @property
    def n_clusters(self):
        return len(self.means)

    def counts(self):
        return np.bincount(self.z, minlength=self.n_clusters)

    def cluster_chol(self, k):
        """Cached lower Cholesky factor of cluster k's covariance."""
        while len(self._chols) < len(self.covs):
            self._chols.append(None)
        if self._chols[k] is None:
            self._chols[k] = _chol_with_jitter(self.covs[k],
                                               "cluster covariance")
        return self._chols[k]

    def invalidate_cluster(self, k=None):
        if k is None:
            self._chols = [None] * len(self.covs)
        else:
            while len(self._chols) < len(self.covs):
                self._chols.append(None)
            self._chols[k] = None

    def validate(self):
        if self.alpha <= 0:
            raise ValueError("concentration must stay positive")
        counts = self.counts()
        if self.z.min(initial=0) < 0 or self.z.max(initial=0) >= self.n_clusters:
            raise ValueError("assignment out of range")
        if np.any(counts == 0):
            raise ValueError("every instantiated cluster must be occupied")
        if len(self.means) != len(self.covs):
            raise ValueError("cluster parameter lists out of sync")


def init_basis(n_freq, dim, rng, k_init=20, alpha=1.0, niw=None,
               alpha_shape=1.0, alpha_rate=1.0):
    """Initialize a basis by assigning frequencies uniformly to k_init
    clusters whose parameters are drawn from the NIW prior, then drawing
    each frequency from its cluster's Gaussian."""
    if niw is None:
        niw = default_niw(dim)
    z = rng.integers(0, k_init, size=n_freq)
    # compact labels so every instantiated cluster is occupied
    occupied, z = np.unique(z, return_inverse=True)
    means, covs = [], []
    for _ in occupied:
        mu, sig = niw_draw(niw, rng)
        means.append(mu)
        covs.append(sig)
    w = np.empty((n_freq, dim))
    for m in range(n_freq):
        k = z[m]
        chol = _chol_with_jitter(covs[k], "cluster covariance")
        w[m] = means[k] + chol @ rng.standard_normal(dim)
    basis = FeatureBasis(W=w, z=z.astype(np.int64), means=means, covs=covs,
                         alpha=float(alpha), niw=niw,
                         alpha_shape=alpha_shape, alpha_rate=alpha_rate)
    basis.validate()
    return basis


def prior_basis(n_freq, dim, rng, niw=None, alpha_shape=1.0, alpha_rate=1.0):
    """Draw a basis from the full generative prior.

    alpha ~ Gamma(a, b); assignments follow the sequential Chinese
    restaurant process; cluster parameters are NIW draws; frequencies are
    Gaussian draws from their clusters.
    """
    if niw is None:
        niw = default_niw(dim)
    alpha = rng.gamma(alpha_shape) / alpha_rate
    z = np.zeros(n_freq, dtype=np.int64)
    counts = []
    for m in range(n_freq):
        probs = np.array(counts + [alpha], dtype=float)
        probs /= probs.sum()
        k = rng.choice(len(probs), p=probs)
        z[m] = k
        if k == len(counts):
            counts.append(1)
        else:
            counts[k] += 1
    means, covs = [], []
    for _ in counts:
        mu, sig = niw_draw(niw, rng)
        means.append(mu)
        covs.append(sig)
    w = np.empty((n_freq, dim))
    for m in range(n_freq):
        chol = _chol_with_jitter(covs[z[m]], "cluster covariance")
        w[m] = means[z[m]] + chol @ rng.standard_normal(dim)
    basis = FeatureBasis(W=w, z=z, means=means, covs=covs,
                         alpha=float(alpha), niw=niw,
                         alpha_shape=alpha_shape, alpha_rate=alpha_rate)
    basis.validate()
    return basis


def niw_posterior(members, niw):
    """Standard NIW posterior given member rows (n, D)."""
    members = np.atleast_2d(members)
    n = members.shape[0]
    if n == 0:
        return NIWParams(niw.mu0.copy(), niw.lam0, niw.nu0, niw.psi0.copy())
    wbar = members.mean(axis=0)
    dev = members - wbar
    scatter = dev.T @ dev
    dev0 = wbar - niw.mu0
    lam_n = niw.lam0 + n
    psi_n = niw.psi0 + scatter \
        + (niw.lam0 * n / lam_n) * np.outer(dev0, dev0)
    m_n = (niw.lam0 * niw.mu0 + n * wbar) / lam_n
    return NIWParams(m_n, lam_n, niw.nu0 + n, psi_n)


def propose_frequency(m, basis, log_lik, rng, current_log_lik=None):
    """Metropolis update of frequency m from its cluster's conditional prior.

    `log_lik` maps a candidate frequency vector for row m to the data
    log-likelihood. The proposal is drawn from N(mu_{z_m}, Sigma_{z_m}),
    so the acceptance probability reduces to the likelihood ratio. A
    non-finite candidate likelihood rejects with a warning.

    Returns (accepted, log_lik_value) where the value refers to the state
    after the update.
    """
    k = basis.z[m]
    chol = basis.cluster_chol(k)
    w_new = basis.means[k] + chol @ rng.standard_normal(basis.dim)
    if current_log_lik is None:
        current_log_lik = log_lik(basis.W[m])
    cand = log_lik(w_new)
    if not np.isfinite(cand):
        logger.warning("non-finite likelihood for frequency proposal %d; "
                       "rejecting", m)
        return False, current_log_lik
    if np.log(rng.uniform()) < cand - current_log_lik:
        basis.W[m] = w_new
        return True, cand
    return False, current_log_lik


def assignment_probs(basis, w, counts):
    """Categorical weights for reassigning one frequency.

    Entry k < K is proportional to counts[k] * N(w | mu_k, Sigma_k); the
    final entry is alpha times the NIW marginal density (the fresh-cluster
    case). `counts` excludes the frequency being reassigned.
    """
    k_count = len(basis.means)
    logw = np.empty(k_count + 1)
    for k in range(k_count):
        logw[k] = np.log(counts[k]) + mvn_logpdf(w, basis.means[k],
                                                 basis.cluster_chol(k))
    logw[k_count] = np.log(basis.alpha) + niw_marginal_logpdf(w, basis.niw)
    logw -= logw.max()
    probs = np.exp(logw)
    return probs / probs.sum()


def assign_clusters(basis, rng):
    """Gibbs-resample every cluster assignment.

    Each row is removed from its cluster (dropping the cluster if it
    empties) and reassigned among the occupied clusters, weighted by
    n_k * N(w | mu_k, Sigma_k), or to a fresh cluster weighted by
    alpha times the NIW marginal density. A fresh cluster's parameters
    are drawn from the NIW posterior given its single member.
    """
    n_freq = basis.n_freq
    counts = basis.counts().astype(np.int64)
    for m in range(n_freq):
        k_old = basis.z[m]
        counts[k_old] -= 1
        if counts[k_old] == 0:
            _drop_cluster(basis, k_old, counts)
            counts = np.delete(counts, k_old)
        w = basis.W[m]
        k_count = len(basis.means)
        probs = assignment_probs(basis, w, counts)
        k_new = rng.choice(k_count + 1, p=probs)
        if k_new == k_count:
            post = niw_posterior(w[None, :], basis.niw)
            mu, sig = niw_draw(post, rng)
            basis.means.append(mu)
            basis.covs.append(sig)
            basis._chols.append(None)
            counts = np.append(counts, 1)
        else:
            counts[k_new] += 1
        basis.z[m] = k_new
    return basis


def _drop_cluster(basis, k, counts):
    del basis.means[k]
    del basis.covs[k]
    if len(basis._chols) > k:
        del basis._chols[k]
    basis.z[basis.z > k] -= 1


def update_cluster_params(basis, rng):
    """Conjugate NIW draw of every occupied cluster's mean and covariance."""
    for k in range(basis.n_clusters):
        members = basis.W[basis.z == k]
        post = niw_posterior(members, basis.niw)
        mu, sig = niw_draw(post, rng)
        basis.means[k] = mu
        basis.covs[k] = sig
        basis.invalidate_cluster(k)
    return basis


def update_concentration(basis, rng):
    """Resample the DP concentration by beta augmentation.

    eta ~ Beta(alpha + 1, M'); alpha is then drawn from a two-component
    Gamma mixture whose odds are (a + K - 1) : M'(b - log eta).
    """
    m_prime = basis.n_freq
    k = basis.n_clusters
    a, b = basis.alpha_shape, basis.alpha_rate
    eta = rng.beta(basis.alpha + 1.0, m_prime)
    if eta <= 0.0 or not np.isfinite(eta):
        eta = np.finfo(float).tiny
    log_eta = np.log(eta)
    odds = (a + k - 1.0) / (m_prime * (b - log_eta))
    pi_eta = odds / (1.0 + odds)
    if rng.uniform() < pi_eta:
        shape = a + k
    else:
        shape = a + k - 1.0
    rate = b - log_eta
    basis.alpha = rng.gamma(shape) / rate
    basis.eta = eta
    return basis.alpha
