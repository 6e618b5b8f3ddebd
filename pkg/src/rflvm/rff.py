"""Random Fourier feature maps.

A shift-invariant kernel is approximated by the inner product of sinusoidal
feature vectors whose frequencies are drawn from the kernel's spectral
density. Each frequency contributes an interleaved (sin, cos) column pair,
so every feature row has unit Euclidean norm by construction.
"""

import numpy as np


def compute_features(X, W):
    """Map inputs to the random Fourier feature matrix.

    Parameters
    ----------
    X : ndarray, shape (N, D)
        Input points.
    W : ndarray or FeatureBasis, shape (M/2, D)
        Random frequencies, one per (sin, cos) column pair.

    Returns
    -------
    Phi : ndarray, shape (N, M)
        Row i is sqrt(2/M) * [sin(w_1.x_i), cos(w_1.x_i), ...,
        sin(w_{M/2}.x_i), cos(w_{M/2}.x_i)].
    """
    W = getattr(W, "W", W)
    X = np.asarray(X, dtype=float)
    W = np.asarray(W, dtype=float)
    if X.ndim != 2 or W.ndim != 2:
        raise ValueError("X and W must be 2-D arrays")
    if X.shape[1] != W.shape[1]:
        raise ValueError(
            f"dimension mismatch: X has {X.shape[1]} columns, "
            f"W has {W.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("X must be finite")
    proj = X @ W.T                     # (N, M/2)
    n, half_m = proj.shape
    m = 2 * half_m
    phi = np.empty((n, m))
    phi[:, 0::2] = np.sin(proj)
    phi[:, 1::2] = np.cos(proj)
    phi *= np.sqrt(2.0 / m)
    return phi


def feature_pair(X, w, m_total):
    """Sin/cos column pair for one frequency, scaled for an M-column map.

    Used to update two columns of Phi in place when a single frequency
    changes, without recomputing the full feature matrix.
    """
    proj = np.asarray(X, dtype=float) @ np.asarray(w, dtype=float)
    pair = np.empty((proj.shape[0], 2))
    pair[:, 0] = np.sin(proj)
    pair[:, 1] = np.cos(proj)
    pair *= np.sqrt(2.0 / m_total)
    return pair


def approx_kernel_matrix(phi):
    """Gram matrix of the feature map: Phi @ Phi.T.

    Symmetric positive semidefinite with unit diagonal (up to roundoff)
    for any matrix produced by :func:`compute_features`.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 2:
        raise ValueError("phi must be a 2-D array")
    k = phi @ phi.T
    return 0.5 * (k + k.T)
