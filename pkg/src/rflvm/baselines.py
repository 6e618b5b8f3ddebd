"""Linear baselines: PCA latents and probabilistic PCA with imputation."""

from dataclasses import dataclass

import numpy as np


def pca_latents(y, d, log_counts=False):
    """Top-d principal component scores, optionally after log1p."""
    y = np.asarray(y, dtype=float)
    if log_counts:
        y = np.log1p(y)
    centered = y - y.mean(axis=0, keepdims=True)
    u, s, _ = np.linalg.svd(centered, full_matrices=False)
    return u[:, :d] * s[:d]


@dataclass
class PPCAResult:
    x: np.ndarray               # (N, D) posterior-mean latent scores
    w: np.ndarray               # (J, D) loadings
    mean: np.ndarray            # (J,)
    noise: float                # sigma_y^2
    imputed: np.ndarray         # (N, J) reconstruction E[Y]


def _ppca_closed_form(y, d):
    """Maximum-likelihood PPCA from the top-d eigendecomposition."""
    n, j = y.shape
    mu = y.mean(axis=0)
    centered = y - mu
    cov = centered.T @ centered / n
    vals, vecs = np.linalg.eigh(cov)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    sigma2 = float(vals[d:].mean()) if d < j else 0.0
    w = vecs[:, :d] * np.sqrt(np.maximum(vals[:d] - sigma2, 0.0))
    return mu, w, sigma2


def _posterior_scores(y, mu, w, sigma2):
    d = w.shape[1]
    m = w.T @ w + sigma2 * np.eye(d)
    return np.linalg.solve(m, w.T @ (y - mu).T).T


def ppca_baseline(y, d, mask=None, n_iter=500, tol=1e-8, min_noise=1e-12):
    """Probabilistic PCA fit with missing-data imputation.

    Fully observed data takes the closed-form eigendecomposition fit.
    With a mask, expectation-maximization runs over the observed entries
    and missing ones are imputed by the posterior mean mu + W E[x].
    """
    y = np.asarray(y, dtype=float)
    n, j = y.shape
    if d > j:
        raise ValueError("latent dimension exceeds feature count")
    if mask is None or mask.all():
        mu, w, sigma2 = _ppca_closed_form(y, d)
        x = _posterior_scores(y, mu, w, sigma2)
        recon = mu + x @ w.T
        return PPCAResult(x=x, w=w, mean=mu, noise=sigma2, imputed=recon)

    mask = np.asarray(mask, dtype=bool)
    # initialize from mean-filled data
    col_mean = np.array([y[mask[:, c], c].mean() if mask[:, c].any()
                         else 0.0 for c in range(j)])
    filled = np.where(mask, y, col_mean[None, :])
    mu, w, sigma2 = _ppca_closed_form(filled, d)
    sigma2 = max(sigma2, 1e-6)
    prev = -np.inf
    for _ in range(n_iter):
        # E-step per row over its observed coordinates
        x_hat = np.zeros((n, d))
        xx = np.zeros((n, d, d))
        for i in range(n):
            obs = mask[i]
            w_o = w[obs]
            m = w_o.T @ w_o + sigma2 * np.eye(d)
            cov = sigma2 * np.linalg.inv(m)
            x_hat[i] = np.linalg.solve(m, w_o.T @ (y[i, obs] - mu[obs]))
            xx[i] = cov + np.outer(x_hat[i], x_hat[i])
        # M-step
        resid_total = 0.0
        n_obs_total = 0
        new_w = np.zeros_like(w)
        for c in range(j):
            rows = mask[:, c]
            mu[c] = np.mean(y[rows, c] - x_hat[rows] @ w[c])
            a = xx[rows].sum(axis=0)
            b = x_hat[rows].T @ (y[rows, c] - mu[c])
            new_w[c] = np.linalg.solve(a, b)
        w = new_w
        for c in range(j):
            rows = mask[:, c]
            dev = y[rows, c] - mu[c] - x_hat[rows] @ w[c]
            cov_rows = xx[rows] - np.einsum("nd,ne->nde", x_hat[rows],
                                            x_hat[rows])
            cov_term = np.einsum("nde,d,e->n", cov_rows, w[c], w[c])
            resid_total += np.sum(dev ** 2 + cov_term)
            n_obs_total += rows.sum()
        sigma2 = max(resid_total / n_obs_total, min_noise)
        if abs(resid_total - prev) < tol * (1.0 + abs(prev)):
            break
        prev = resid_total
    recon = mu + x_hat @ w.T
    return PPCAResult(x=x_hat, w=w, mean=mu, noise=sigma2, imputed=recon)
