"""Joint-distribution (forward vs successive-conditional) sampler checks.

Forward samples draw the full generative model from scratch. The
successive-conditional chain alternates one Gibbs sweep with resimulating
the data given the state. When every conditional update is correct, both
paths leave the state variables with identical marginal distributions, so
their summary statistics must agree up to Monte Carlo error.
"""

import numpy as np

from rflvm.engine import gibbs_step, init_state, simulate_data


def monitored_stats(state):
    """Scalar summaries whose forward/Gibbs means must match."""
    x = state.latent.X
    b = state.weights.B
    if state.spec.kind == "multinomial":
        b = b[:, :-1]
    return {
        "x_mean": float(x.mean()),
        "x_sq": float((x ** 2).mean()),
        "beta_mean": float(b.mean()),
        "beta_sq": float((b ** 2).mean()),
        "alpha": float(state.basis.alpha),
    }


def forward_samples(config, template, n_samples, rng):
    rows = []
    for _ in range(n_samples):
        state = init_state(config, template, rng, from_prior=True)
        rows.append(monitored_stats(state))
    return _stack(rows)


def gibbs_samples(config, template, n_samples, rng, thin=1):
    state = init_state(config, template, rng, from_prior=True)
    data = simulate_data(state, rng, template=template)
    rows = []
    for t in range(n_samples * thin):
        gibbs_step(state, data, rng, standardize=False)
        data = simulate_data(state, rng, template=template)
        if (t + 1) % thin == 0:
            rows.append(monitored_stats(state))
    return _stack(rows)


def _stack(rows):
    return {k: np.array([r[k] for r in rows]) for k in rows[0]}


def batch_means_se(x, n_batches=40):
    """Standard error of the mean of an autocorrelated series."""
    usable = len(x) // n_batches * n_batches
    bm = x[:usable].reshape(n_batches, -1).mean(axis=1)
    return bm.std(ddof=1) / np.sqrt(n_batches)


def compare(forward, gibbs, n_se=3.0):
    """Per-statistic z-scores of the forward/Gibbs mean gap."""
    report = {}
    for key in forward:
        f, g = forward[key], gibbs[key]
        se = np.sqrt((f.std(ddof=1) / np.sqrt(len(f))) ** 2
                     + batch_means_se(g) ** 2)
        z = (f.mean() - g.mean()) / se
        report[key] = {"forward": f.mean(), "gibbs": g.mean(),
                       "se": se, "z": z, "ok": abs(z) <= n_se}
    return report


def format_report(report):
    lines = []
    for key, row in report.items():
        lines.append(
            f"  {key:10s} forward={row['forward']:+.4f} "
            f"gibbs={row['gibbs']:+.4f} z={row['z']:+.2f} "
            f"{'ok' if row['ok'] else 'FAIL'}")
    return "\n".join(lines)
