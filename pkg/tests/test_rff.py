import numpy as np
import pytest

from rflvm.rff import approx_kernel_matrix, compute_features, feature_pair


def rbf_kernel(x, y=None, lengthscale=1.0):
    """Exact RBF oracle: exp(-||x - x'||^2 / (2 l^2))."""
    y = x if y is None else y
    d2 = np.sum(x ** 2, axis=1)[:, None] + np.sum(y ** 2, axis=1)[None, :] \
        - 2.0 * x @ y.T
    return np.exp(-np.maximum(d2, 0.0) / (2.0 * lengthscale ** 2))


def test_zero_vector_row():
    rng = np.random.default_rng(0)
    w = rng.standard_normal((5, 3))
    phi = compute_features(np.zeros((1, 3)), w)
    expect = np.sqrt(2.0 / 10.0) * np.tile([0.0, 1.0], 5)
    np.testing.assert_allclose(phi[0], expect, atol=1e-15)


def test_rows_have_unit_norm():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((40, 4)) * 3.0
    w = rng.standard_normal((25, 4))
    phi = compute_features(x, w)
    np.testing.assert_allclose(np.linalg.norm(phi, axis=1), 1.0, rtol=1e-12)


def test_inner_product_approximates_rbf():
    rng = np.random.default_rng(2)
    w = rng.standard_normal((1000, 2))          # M = 2000
    x = np.array([[1.0, 0.0], [0.0, 1.0]])
    phi = compute_features(x, w)
    approx = phi[0] @ phi[1]
    exact = np.exp(-0.5 * 2.0)
    assert abs(approx - exact) <= 0.05


def test_feature_pair_matches_columns():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((7, 2))
    w = rng.standard_normal((4, 2))
    phi = compute_features(x, w)
    for m in range(4):
        pair = feature_pair(x, w[m], 8)
        np.testing.assert_allclose(pair, phi[:, 2 * m:2 * m + 2])


def test_dimension_mismatch_raises():
    with pytest.raises(ValueError, match="dimension mismatch"):
        compute_features(np.zeros((3, 2)), np.zeros((4, 3)))


def test_kernel_matrix_identical_rows():
    phi = np.tile(np.full(6, 1 / np.sqrt(6.0)), (4, 1))
    np.testing.assert_allclose(approx_kernel_matrix(phi), np.ones((4, 4)),
                               rtol=1e-12)


def test_kernel_matrix_unit_diagonal_and_psd():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((30, 3))
    w = rng.standard_normal((20, 3))
    k = approx_kernel_matrix(compute_features(x, w))
    np.testing.assert_allclose(np.diag(k), 1.0, rtol=1e-12)
    assert np.linalg.eigvalsh(k).min() >= -1e-8


def scurve_points(n, rng):
    u = np.sort(rng.uniform(-1.5 * np.pi, 1.5 * np.pi, size=n))
    return np.column_stack([np.sin(u), np.sign(u) * (np.cos(u) - 1.0)])


def test_kernel_error_decreases_with_m():
    rng = np.random.default_rng(5)
    x = scurve_points(80, rng)
    k_true = rbf_kernel(x)
    errs = []
    for m in (10, 100, 1000):
        w = rng.standard_normal((m // 2, 2))
        k_hat = approx_kernel_matrix(compute_features(x, w))
        errs.append(np.linalg.norm(k_hat - k_true))
    assert errs[0] > errs[1] > errs[2]


def test_unbiasedness_rate():
    # RMS error of the averaged estimator over R bases should scale like
    # 1/sqrt(R M): the log-log slope against M stays near -1/2.
    rng = np.random.default_rng(6)
    x = np.array([0.3, -0.8])
    y = np.array([-0.5, 0.4])
    exact = np.exp(-0.5 * np.sum((x - y) ** 2))
    ms = np.array([16, 64, 256, 1024])
    n_rep, n_bases = 40, 8
    rms = []
    for m in ms:
        sq = 0.0
        for _ in range(n_rep):
            est = 0.0
            for _ in range(n_bases):
                w = rng.standard_normal((m // 2, 2))
                phi = compute_features(np.vstack([x, y]), w)
                est += phi[0] @ phi[1]
            sq += (est / n_bases - exact) ** 2
        rms.append(np.sqrt(sq / n_rep))
    slope = np.polyfit(np.log(ms), np.log(rms), 1)[0]
    assert -0.6 <= slope <= -0.4
