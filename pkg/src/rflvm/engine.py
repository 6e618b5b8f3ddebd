"""Gibbs-sweep orchestration, chain storage, summaries, and imputation.

One chain is one mutation stream: a ModelState is updated in place by
gibbs_step in a fixed order, with the feature matrix recomputed whenever
the latents or frequencies change. Runs are deterministic functions of
(config, data, seed) and can be checkpointed and resumed bit-exactly.
"""

import logging
import os
import pickle
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from rflvm import dp, likelihoods as lk
from rflvm.data import Dataset
from rflvm.samplers import pg_draw
from rflvm.latent import (DynamicPrior, IIDPrior, LatentState, prior_factor,
                          standardize_latent, update_gp_hypers, update_latent)
from rflvm.rff import compute_features, feature_pair

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class Config:
    """Run configuration for one chain."""
    likelihood: str = "gaussian"
    n_rff: int = 100                 # total feature count M; must be even
    latent_dim: int = 2
    iterations: int = 2000
    burnin: int = 1000
    seed: int = 0
    dynamic: bool = False
    n_inducing: int = 25
    k_init: int = 20
    alpha_init: float = 1.0
    thin: int = 1
    standardize: bool = True
    trials: int = 1                  # binomial only
    a_sigma: float = 1.0
    b_sigma: float = 1.0
    a_r: float = 1.0
    b_r: float = 1.0
    checkpoint_every: int = 100

    def validate(self):
        if self.n_rff % 2 != 0 or self.n_rff < 2:
            raise ValueError("n_rff must be a positive even number")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be at least 1")
        if self.burnin > self.iterations:
            raise ValueError(
                f"burnin ({self.burnin}) exceeds iterations "
                f"({self.iterations})")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.likelihood not in lk.KINDS:
            raise ValueError(f"unknown likelihood {self.likelihood!r}")
        return self


@dataclass
class ChainRecord:
    """One retained posterior sample snapshot."""
    iteration: int
    X: np.ndarray
    n_clusters: int
    alpha: float
    theta: dict
    log_lik: float


@dataclass
class ModelState:
    """Full mutable sampler state for one chain."""
    latent: LatentState
    basis: dp.FeatureBasis
    weights: lk.MappingWeights
    spec: lk.LikelihoodSpec
    phi: np.ndarray = None

    def refresh_features(self):
        self.phi = compute_features(self.latent.X, self.basis.W)
        return self.phi

    def psi(self):
        return self.phi @ self.weights.B

    def theta_snapshot(self):
        out = {}
        if self.spec.sigma2 is not None:
            out["sigma2"] = self.spec.sigma2.copy()
        if self.spec.r is not None:
            out["r"] = self.spec.r.copy()
        if isinstance(self.latent.prior, DynamicPrior):
            out["log_lengthscale"] = self.latent.prior.log_lengthscale
            out["log_variance"] = self.latent.prior.log_variance
        return out


def _make_spec(config, n_features):
    kind = config.likelihood
    if kind == "gaussian":
        return lk.LikelihoodSpec.gaussian(
            n_features, sigma2=1.0, a_sigma=config.a_sigma,
            b_sigma=config.b_sigma)
    if kind == "poisson":
        return lk.LikelihoodSpec.poisson()
    if kind == "binomial":
        return lk.LikelihoodSpec.binomial(trials=config.trials)
    if kind == "negative_binomial":
        return lk.LikelihoodSpec.negative_binomial(
            n_features, r=1.0, a_r=config.a_r, b_r=config.b_r)
    return lk.LikelihoodSpec.multinomial()


def _make_prior(config, data):
    if not config.dynamic:
        return IIDPrior(dim=config.latent_dim)
    if data.time is None:
        raise ValueError("dynamic mode requires a time index on the data")
    return DynamicPrior(dim=config.latent_dim, time=data.time,
                        n_inducing=config.n_inducing)


def pca_scores(y, d):
    """Top-d principal component scores of a centered matrix."""
    centered = y - y.mean(axis=0, keepdims=True)
    u, s, _ = np.linalg.svd(centered, full_matrices=False)
    return u[:, :d] * s[:d]


def _init_latent(config, data):
    """Latent initialization from principal components of transformed Y."""
    y = np.where(data.mask, data.Y, np.nan)
    if config.likelihood != "gaussian":
        y = np.log1p(y)
    col_means = np.nanmean(y, axis=0)
    y = np.where(np.isnan(y), col_means[None, :], y)
    x = pca_scores(y, config.latent_dim)
    if x.shape[1] < config.latent_dim:
        pad = np.zeros((x.shape[0], config.latent_dim - x.shape[1]))
        x = np.hstack([x, pad])
    return standardize_latent(x)


def init_state(config, data, rng, from_prior=False):
    """Build a ModelState.

    Default initialization follows the run protocol: latents from
    principal components, frequencies from the mixture prior with k_init
    clusters, weights from their prior, likelihood parameters at their
    prior means. With `from_prior` every variable is drawn from the full
    generative model instead (latents included), which is what joint
    forward/backward sampler checks need.
    """
    config.validate()
    n, n_features = data.Y.shape
    spec = _make_spec(config, n_features)
    prior = _make_prior(config, data)
    if from_prior:
        basis = dp.prior_basis(config.n_rff // 2, config.latent_dim, rng)
    else:
        basis = dp.init_basis(config.n_rff // 2, config.latent_dim, rng,
                              k_init=config.k_init, alpha=config.alpha_init)
    m = config.n_rff
    beta0 = np.zeros(m)
    b0 = np.eye(m)

    if from_prior:
        factor = prior_factor(prior, n)
        if isinstance(prior, IIDPrior):
            x = rng.standard_normal((n, config.latent_dim))
        else:
            x = factor.draw(rng, size=config.latent_dim)
        if spec.kind == "gaussian":
            spec.sigma2 = config.b_sigma / rng.gamma(
                config.a_sigma, size=n_features)
        if spec.kind == "negative_binomial":
            spec.r = rng.gamma(config.a_r, size=n_features) / config.b_r
    else:
        x = _init_latent(config, data)

    b = np.linalg.cholesky(b0) @ rng.standard_normal((m, n_features)) \
        + beta0[:, None]
    if spec.kind == "multinomial":
        b[:, -1] = 0.0
    weights = lk.MappingWeights(B=b, beta0=beta0, B0=b0)
    state = ModelState(latent=LatentState(X=x, prior=prior), basis=basis,
                       weights=weights, spec=spec)
    state.refresh_features()
    return state


def simulate_data(state, rng, template=None):
    """Draw Y from the generative model at the current state.

    `template` supplies the mask, binomial trials come from the spec, and
    multinomial row totals come from the template's observed totals. Used
    by forward/backward sampler checks and synthetic data generation.
    """
    psi = state.psi()
    spec = state.spec
    if spec.kind == "gaussian":
        y = psi + np.sqrt(spec.sigma2)[None, :] * \
            rng.standard_normal(psi.shape)
    elif spec.kind == "poisson":
        with np.errstate(over="ignore"):
            rate = np.minimum(np.exp(psi), 1e12)
        y = rng.poisson(rate).astype(float)
    elif spec.kind == "binomial":
        trials = np.broadcast_to(np.asarray(spec.trials), psi.shape)
        y = rng.binomial(trials.astype(np.int64), expit(psi)).astype(float)
    elif spec.kind == "negative_binomial":
        p = np.clip(expit(psi), 1e-12, 1.0 - 1e-12)
        y = rng.negative_binomial(spec.r[None, :], 1.0 - p).astype(float)
    else:
        if template is None:
            raise ValueError("multinomial simulation needs a template for "
                             "row totals")
        tot = np.where(template.mask, template.Y, 0.0) \
            .sum(axis=1).astype(np.int64)
        lse = psi - psi.max(axis=1, keepdims=True)
        probs = np.exp(lse)
        probs /= probs.sum(axis=1, keepdims=True)
        y = np.array([rng.multinomial(tot[i], probs[i])
                      for i in range(psi.shape[0])], dtype=float)
    mask = template.mask.copy() if template is not None else None
    time = template.time if template is not None else None
    labels = template.labels if template is not None else None
    return Dataset(Y=y, mask=mask, time=time, labels=labels,
                   provenance="simulated")


def _log_lik_at(state, data, phi=None, psi=None, include_const=True):
    return lk.log_likelihood(phi if phi is not None else state.phi,
                             state.weights, state.spec, data, psi=psi,
                             include_const=include_const)


def _update_weights(state, data, rng):
    """Step 1-2: likelihood-specific augmentation and weight draws."""
    spec, weights, phi = state.spec, state.weights, state.phi
    if spec.kind == "gaussian":
        gram_full = phi.T @ phi
        for j in range(data.n_features):
            weights.B[:, j] = lk.update_beta_gaussian(
                phi, spec, data, j, weights, rng, gram_full=gram_full)
    elif spec.kind == "poisson":
        for j in range(data.n_features):
            weights.B[:, j] = lk.update_beta_generic(
                phi, spec, data, j, weights, rng)
    elif spec.kind == "multinomial":
        # per-feature blocks: fresh xi, then omega and beta, sequentially;
        # the last column stays pinned at zero for identifiability
        kappa = lk.pg_kappa(spec, data)
        _, b_mat = lk.pg_ab_mapping(spec, data)
        b_eff = np.where(data.mask, b_mat, 0.0)
        psi = state.psi()
        for j in range(data.n_features - 1):
            xi_j = lk.multinomial_xi(phi, weights, j, psi=psi)
            omega_j = pg_draw(b_eff[:, j], psi[:, j] - xi_j, rng)
            weights.B[:, j] = lk.update_beta_pg(
                phi, omega_j, kappa[:, j], weights, rng, xi_j=xi_j)
            psi[:, j] = phi @ weights.B[:, j]
    else:
        omega = lk.draw_pg_aux(phi, weights, spec, data, rng)
        kappa = lk.pg_kappa(spec, data)
        for j in range(data.n_features):
            weights.B[:, j] = lk.update_beta_pg(
                phi, omega[:, j], kappa[:, j], weights, rng)


def _update_theta(state, data, rng):
    """Step 3: likelihood-specific parameter draws."""
    spec = state.spec
    if spec.kind == "gaussian":
        resid = data.Y - state.psi()
        spec.sigma2 = lk.update_sigma(resid, data.mask, spec.a_sigma,
                                      spec.b_sigma, rng)
    elif spec.kind == "negative_binomial":
        psi = state.psi()
        for j in range(data.n_features):
            p_j = expit(psi[:, j])
            spec.r[j] = lk.update_dispersion(
                data.Y[:, j], p_j, data.mask[:, j], spec.a_r, spec.b_r,
                spec.r[j], rng)


def _update_frequencies(state, data, rng):
    """Step 5: Metropolis sweep over frequencies with incremental features."""
    m_total = state.phi.shape[1]
    psi = state.psi()
    ll_cur = _log_lik_at(state, data, psi=psi, include_const=False)
    x = state.latent.X
    b = state.weights.B
    for m in range(state.basis.n_freq):
        cols = slice(2 * m, 2 * m + 2)

        def cand_loglik(w_new, cols=cols):
            pair = feature_pair(x, w_new, m_total)
            psi_cand = psi + (pair - state.phi[:, cols]) @ b[cols, :]
            return _log_lik_at(state, data, psi=psi_cand,
                               include_const=False)

        accepted, ll_cur = dp.propose_frequency(
            m, state.basis, cand_loglik, rng, current_log_lik=ll_cur)
        if accepted:
            pair = feature_pair(x, state.basis.W[m], m_total)
            psi += (pair - state.phi[:, cols]) @ b[cols, :]
            state.phi[:, cols] = pair


def gibbs_step(state, data, rng, standardize=True):
    """One full Gibbs sweep over all conditionals, in fixed order.

    (1) Polya-gamma auxiliaries where the likelihood uses them, (2) weight
    draws, (3) likelihood parameters, (4) latents by elliptical slice
    then standardization, (5) frequency Metropolis sweep, (6) cluster
    assignments, (7) cluster parameters, (8) concentration, (9) GP
    hyperparameters in dynamic mode. The feature cache is refreshed
    whenever X or W changes.
    """
    _update_weights(state, data, rng)       # steps 1-2
    _update_theta(state, data, rng)         # step 3

    def loglik_x(x_cand):                   # step 4
        phi_cand = compute_features(x_cand, state.basis.W)
        return _log_lik_at(state, data, phi=phi_cand, include_const=False)

    state.latent.X = update_latent(state.latent, loglik_x, rng)
    if standardize:
        state.latent.X = standardize_latent(state.latent.X)
    state.refresh_features()

    _update_frequencies(state, data, rng)   # step 5
    dp.assign_clusters(state.basis, rng)    # step 6
    dp.update_cluster_params(state.basis, rng)  # step 7
    dp.update_concentration(state.basis, rng)   # step 8

    if isinstance(state.latent.prior, DynamicPrior):   # step 9
        state.latent.X = update_gp_hypers(state.latent, loglik_x, rng)
        state.refresh_features()
    return state


@dataclass
class Chain:
    """Output of a run: retained records plus running accumulators."""
    config: Config
    records: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    pred_sum: np.ndarray = None
    n_pred: int = 0
    final_state: ModelState = None

    def retained_x(self):
        return np.array([r.X for r in self.records])


@dataclass
class Summary:
    """Posterior summary of a retained chain."""
    x_mean: np.ndarray
    y_mean: np.ndarray
    n_clusters_trace: np.ndarray
    alpha_trace: np.ndarray
    log_lik_trace: np.ndarray


def posterior_summary(chain):
    """Elementwise posterior means and per-record traces."""
    if not chain.records:
        raise ValueError("no retained records: the chain is empty after "
                         "burn-in; lower burnin or raise iterations")
    x_mean = np.mean([r.X for r in chain.records], axis=0)
    y_mean = chain.pred_sum / chain.n_pred
    return Summary(
        x_mean=x_mean,
        y_mean=y_mean,
        n_clusters_trace=np.array([r.n_clusters for r in chain.records]),
        alpha_trace=np.array([r.alpha for r in chain.records]),
        log_lik_trace=np.array([r.log_lik for r in chain.records]))


def impute(summary, data):
    """Posterior-expected values for every masked entry.

    Returns (rows, cols, values) in row-major order of the mask.
    """
    if not np.any(~data.mask):
        return (np.array([], dtype=int), np.array([], dtype=int),
                np.array([]))
    rows, cols = np.nonzero(~data.mask)
    return rows, cols, summary.y_mean[rows, cols]


def _record(state, iteration, log_lik):
    return ChainRecord(iteration=iteration, X=state.latent.X.copy(),
                       n_clusters=state.basis.n_clusters,
                       alpha=state.basis.alpha,
                       theta=state.theta_snapshot(), log_lik=log_lik)


def save_checkpoint(path, chain, state, rng, iteration):
    """Serialize the full chain position, bit-exactly restorable."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": chain.config,
        "state": state,
        "rng_state": rng.bit_generator.state,
        "iteration": iteration,
        "records": chain.records,
        "trace": chain.trace,
        "pred_sum": chain.pred_sum,
        "n_pred": chain.n_pred,
    }
    with open(path, "wb") as handle:
        pickle.dump(payload, handle)


def load_checkpoint(path):
    with open(path, "rb") as handle:
        payload = pickle.load(handle)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version "
                         f"{payload.get('version')!r}")
    return payload


def _trace_line(entry):
    return (f"iter={entry['iter']} loglik={entry['loglik']!r} "
            f"K={entry['K']} alpha={entry['alpha']!r}")


def run_chain(config, data, out_dir=None, callback=None):
    """Run a full chain: initialize, sweep, retain, summarize.

    Writes a line-delimited run trace and periodic checkpoints under
    `out_dir` when given. Partial chains are flushed to a checkpoint
    before an abort propagates. Returns a Chain.
    """
    config.validate()
    if data.Y.size == 0:
        raise ValueError("data is empty")
    data.require_observed_columns()
    if config.likelihood in lk.KINDS[1:]:
        data.require_counts()
    rng = np.random.default_rng(config.seed)
    state = init_state(config, data, rng)
    chain = Chain(config=config,
                  pred_sum=np.zeros_like(data.Y), n_pred=0)
    return _run_loop(chain, state, data, rng, start=0, out_dir=out_dir,
                     callback=callback)


def resume_chain(path, data, out_dir=None):
    """Continue a checkpointed chain to its configured iteration count."""
    payload = load_checkpoint(path)
    chain = Chain(config=payload["config"], records=payload["records"],
                  trace=payload["trace"], pred_sum=payload["pred_sum"],
                  n_pred=payload["n_pred"])
    rng = np.random.default_rng()
    rng.bit_generator.state = payload["rng_state"]
    state = payload["state"]
    return _run_loop(chain, state, data, rng,
                     start=payload["iteration"], out_dir=out_dir)


def _run_loop(chain, state, data, rng, start, out_dir=None, callback=None):
    config = chain.config
    trace_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        trace_path = os.path.join(out_dir, "trace.txt")
        if start == 0:
            open(trace_path, "w").close()
    try:
        for it in range(start, config.iterations):
            gibbs_step(state, data, rng, standardize=config.standardize)
            entry = {"iter": it, "loglik": _log_lik_at(state, data),
                     "K": state.basis.n_clusters,
                     "alpha": state.basis.alpha}
            chain.trace.append(entry)
            if trace_path is not None:
                with open(trace_path, "a") as handle:
                    handle.write(_trace_line(entry) + "\n")
            if it >= config.burnin and \
                    (it - config.burnin) % config.thin == 0:
                chain.records.append(_record(state, it, entry["loglik"]))
                chain.pred_sum += lk.predictive_mean(
                    state.phi, state.weights, state.spec, data=data)
                chain.n_pred += 1
            if out_dir is not None and config.checkpoint_every > 0 and \
                    (it + 1) % config.checkpoint_every == 0:
                save_checkpoint(
                    f"{out_dir}/checkpoint.pkl", chain, state, rng, it + 1)
            if callback is not None:
                callback(it, state)
    except Exception:
        if out_dir is not None:
            save_checkpoint(f"{out_dir}/checkpoint.pkl", chain, state, rng,
                            it)
            logger.exception("chain aborted at iteration %d; checkpoint "
                             "flushed", it)
        raise
    chain.final_state = state
    return chain
