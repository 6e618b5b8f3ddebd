"""Desk-scale experiment protocols shared by the CLI and test suite.

Each protocol generates its synthetic data, runs the configured chains,
and returns plain dictionaries of metric values; file emission lives in
the CLI layer.
"""

import numpy as np

from rflvm.baselines import pca_latents, ppca_baseline
from rflvm.data import mask_random
from rflvm.engine import Config, impute, posterior_summary, run_chain
from rflvm.metrics import distance_matrix_error, knn_accuracy, mse
from rflvm.rff import approx_kernel_matrix, compute_features
from rflvm.synthetic import gen_synthetic

MASK_SEED_OFFSET = 10_000
HOLDOUT_FRAC = 0.2


def parse_seed_range(text):
    """Seeds given either as one integer or an inclusive range 'a..b'."""
    text = str(text)
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(text)]


def masked_synthetic(kind, n, j, seed, frac=HOLDOUT_FRAC):
    syn = gen_synthetic(kind, n, j, seed)
    rng = np.random.default_rng(MASK_SEED_OFFSET + seed)
    data = mask_random(syn.data, frac, rng)
    return syn, data


def heldout_mse(chain, data):
    summary = posterior_summary(chain)
    _, _, values = impute(summary, data)
    return mse(values, data.Y[~data.mask]), summary


def fit_chain(data, likelihood, seed, n_rff=100, latent_dim=2,
              iterations=2000, burnin=1000, dynamic=False, n_inducing=25,
              out_dir=None):
    config = Config(likelihood=likelihood, n_rff=n_rff,
                    latent_dim=latent_dim, iterations=iterations,
                    burnin=burnin, seed=seed, dynamic=dynamic,
                    n_inducing=n_inducing)
    return run_chain(config, data, out_dir=out_dir)


def kernel_error_curve(n=500, seed=0, m_grid=(10, 100, 1000)):
    """Feature-map Gram error against the exact RBF kernel on true
    S-curve latents, per feature count."""
    syn = gen_synthetic("scurve_gaussian", n, 2, seed)
    x = syn.x_true
    d2 = np.sum(x ** 2, axis=1)[:, None] + np.sum(x ** 2, axis=1)[None, :] \
        - 2.0 * x @ x.T
    k_true = np.exp(-np.maximum(d2, 0.0) / 2.0)
    rng = np.random.default_rng(seed)
    rows = []
    for m in m_grid:
        w = rng.standard_normal((m // 2, 2))
        k_hat = approx_kernel_matrix(compute_features(x, w))
        rows.append({"m": m,
                     "frobenius_error": float(np.linalg.norm(k_hat - k_true))})
    return rows


def fig1_protocol(seeds, n=500, j=100, m_grid=(10, 50, 100),
                  iterations=2000, burnin=1000, progress=None):
    """Held-out MSE of the Gaussian model per feature count, plus the
    kernel approximation error curve."""
    mse_rows = []
    for seed in seeds:
        _, data = masked_synthetic("scurve_gaussian", n, j, seed)
        for m in m_grid:
            chain = fit_chain(data, "gaussian", seed, n_rff=m,
                              iterations=iterations, burnin=burnin)
            value, _ = heldout_mse(chain, data)
            mse_rows.append({"m": m, "seed": seed, "mse": value})
            if progress:
                progress(mse_rows[-1])
    kernel_rows = kernel_error_curve(n=n, seed=seeds[0])
    return {"mse": mse_rows, "kernel": kernel_rows}


def fig2_protocol(seeds, n=500, j=100, iterations=2000, burnin=1000,
                  progress=None):
    """Latent recovery on the Poisson S-curve against the PCA baseline.

    Returns per-seed distance-matrix errors and KNN accuracies for the
    model and for PCA on log1p counts, plus the recovered latents.
    """
    rows = []
    latents = {}
    for seed in seeds:
        syn = gen_synthetic("scurve_poisson", n, j, seed)
        data = syn.data
        chain = fit_chain(data, "poisson", seed, iterations=iterations,
                          burnin=burnin)
        summary = posterior_summary(chain)
        x_hat = summary.x_mean
        x_pca = pca_latents(data.Y, 2, log_counts=True)
        row = {
            "seed": seed,
            "rflvm_distance_error": distance_matrix_error(x_hat, syn.x_true),
            "pca_distance_error": distance_matrix_error(x_pca, syn.x_true),
        }
        knn_m = knn_accuracy(x_hat, data.labels, seed=seed)
        knn_p = knn_accuracy(x_pca, data.labels, seed=seed)
        row["rflvm_knn_mean"], row["rflvm_knn_sd"] = knn_m
        row["pca_knn_mean"], row["pca_knn_sd"] = knn_p
        rows.append(row)
        latents[seed] = {"rflvm": x_hat, "pca": x_pca,
                         "true": syn.x_true}
        if progress:
            progress(row)
    return {"rows": rows, "latents": latents}


def table3_protocol(dataset_kind, seeds, n=500, j=100, iterations=2000,
                    burnin=1000, n_inducing=25, progress=None):
    """Imputation MSE of the static model, the dynamic model, and PPCA
    on one synthetic time-series dataset with 20% held-out entries."""
    kind = {"scurve": "scurve_gaussian", "lorenz": "lorenz"}[dataset_kind]
    rows = []
    for seed in seeds:
        _, data = masked_synthetic(kind, n, j, seed)
        held = ~data.mask
        static_chain = fit_chain(data, "gaussian", seed,
                                 iterations=iterations, burnin=burnin)
        static_mse, _ = heldout_mse(static_chain, data)
        dynamic_chain = fit_chain(data, "gaussian", seed,
                                  iterations=iterations, burnin=burnin,
                                  dynamic=True, n_inducing=n_inducing)
        dynamic_mse, _ = heldout_mse(dynamic_chain, data)
        pp = ppca_baseline(np.where(data.mask, data.Y, 0.0), 2,
                           mask=data.mask)
        ppca_mse = mse(pp.imputed[held], data.Y[held])
        rows.append({"seed": seed, "static_mse": static_mse,
                     "dynamic_mse": dynamic_mse, "ppca_mse": ppca_mse})
        if progress:
            progress(rows[-1])
    return {"rows": rows, "summary": _mean_sd(rows)}


def _mean_sd(rows):
    out = {}
    keys = [k for k in rows[0] if k != "seed"]
    for key in keys:
        vals = np.array([r[key] for r in rows], dtype=float)
        out[f"{key}_mean"] = float(vals.mean())
        out[f"{key}_sd"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
    return out
