"""Synthetic dataset generators with known ground truth."""

from dataclasses import dataclass

import numpy as np

from rflvm.data import Dataset
from rflvm.rff import compute_features

KINDS = ("scurve_gaussian", "scurve_poisson", "lorenz")

# Gaussian S-curve emission calibration: GP amplitude against unit noise.
# Chosen so that, after per-column standardization, irreducible noise is
# roughly a sixth of the total variance.
SCURVE_KERNEL_VARIANCE = 5.0
SCURVE_LENGTHSCALE = 1.0
SCURVE_NOISE_SD = 1.0
# Poisson S-curve rate scaling: standardized GP draws mapped to rates with
# mean counts around 3.
POISSON_LOG_GAIN = 0.8
POISSON_MEAN_COUNT = 3.0


@dataclass
class SyntheticData:
    """Generated dataset bundled with its generating ground truth."""
    data: Dataset
    x_true: np.ndarray
    f_true: np.ndarray


def scurve_latents(n, rng):
    """Points along the standard parametric S-curve, ordered by arc
    parameter: (sin u, sign(u)(cos u - 1)) for u in [-3pi/2, 3pi/2]."""
    u = np.sort(rng.uniform(-1.5 * np.pi, 1.5 * np.pi, size=n))
    x = np.column_stack([np.sin(u), np.sign(u) * (np.cos(u) - 1.0)])
    return x, u


def gp_draws(x, n_draws, rng, lengthscale=1.0, variance=1.0, n_rff=1000):
    """Function draws from an RBF-kernel GP prior, approximated with a
    large random feature basis."""
    w = rng.standard_normal((n_rff // 2, x.shape[1])) / lengthscale
    phi = compute_features(x, w)
    beta = rng.standard_normal((n_rff, n_draws))
    return np.sqrt(variance) * phi @ beta


def _standardize_columns(y):
    mu = y.mean(axis=0, keepdims=True)
    sd = y.std(axis=0, keepdims=True)
    sd[sd == 0] = 1.0
    return (y - mu) / sd


def _gen_scurve(kind, n, j, rng):
    x_true, u = scurve_latents(n, rng)
    f = gp_draws(x_true, j, rng, lengthscale=SCURVE_LENGTHSCALE,
                 variance=SCURVE_KERNEL_VARIANCE)
    labels = (u > 0).astype(int)
    time = (u - u.min()) / (u.max() - u.min())
    if kind == "scurve_gaussian":
        y = f + SCURVE_NOISE_SD * rng.standard_normal(f.shape)
        y = _standardize_columns(y)
        f_emit = f
    else:
        f_std = _standardize_columns(f)
        log_rate = np.log(POISSON_MEAN_COUNT) - POISSON_LOG_GAIN ** 2 / 2.0 \
            + POISSON_LOG_GAIN * f_std
        rate = np.exp(log_rate)
        y = rng.poisson(rate).astype(float)
        f_emit = rate
    data = Dataset(Y=y, labels=labels, time=time,
                   provenance=f"synthetic:{kind}")
    return SyntheticData(data=data, x_true=x_true, f_true=f_emit)


def lorenz_trajectory(n_steps, dt=0.01, sigma=10.0, rho=28.0,
                      beta=8.0 / 3.0, init=(1.0, 1.0, 1.0)):
    """Classic chaotic attractor integrated with fixed-step RK4."""
    def deriv(s):
        x, y, z = s
        return np.array([sigma * (y - x), x * (rho - z) - y,
                         x * y - beta * z])

    out = np.empty((n_steps, 3))
    s = np.array(init, dtype=float)
    for i in range(n_steps):
        k1 = deriv(s)
        k2 = deriv(s + 0.5 * dt * k1)
        k3 = deriv(s + 0.5 * dt * k2)
        k4 = deriv(s + dt * k3)
        s = s + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i] = s
    return out


def _gen_lorenz(n, j, rng):
    burn, stride = 1000, 5
    traj = lorenz_trajectory(burn + n * stride)[burn:]
    z = _standardize_columns(traj[::stride][:n])
    lin = rng.standard_normal((3, j)) * 0.7
    freqs = rng.standard_normal((3, j)) * 1.0
    gains = rng.standard_normal(j)
    f = z @ lin + np.sin(z @ freqs) * gains[None, :]
    y = _standardize_columns(f + 1.0 * rng.standard_normal(f.shape))
    time = np.arange(n) * 0.01 * stride
    data = Dataset(Y=y, time=time, provenance="synthetic:lorenz")
    return SyntheticData(data=data, x_true=z, f_true=f)


def gen_synthetic(kind, n, j, seed):
    """Generate a synthetic dataset with ground truth, deterministically.

    Kinds: scurve_gaussian (real-valued emissions), scurve_poisson
    (counts), lorenz (chaotic 3-D latent mapped through a random
    linear-plus-sine map to Gaussian features). All attach a time index;
    the S-curves also attach half-plane labels.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    if n < 2 or j < 2:
        raise ValueError("need at least 2 rows and 2 features")
    rng = np.random.default_rng(seed)
    if kind in ("scurve_gaussian", "scurve_poisson"):
        return _gen_scurve(kind, n, j, rng)
    return _gen_lorenz(n, j, rng)
