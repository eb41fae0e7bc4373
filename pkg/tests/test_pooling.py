import numpy as np
import pytest

from tardis.data import DatasetManifest, SampleRecord
from tardis.errors import ShapeMismatch, TooFewSamples, UnfittedPCA
from tardis.pooling import fit_pca, pool, pool_batch

TWO_CHANNEL = np.array(
    [[[1.0, 2.0], [3.0, 4.0]], [[-1.0, 0.0], [0.0, -2.0]]]
)  # C=2, H=W=2


def test_max_pool():
    np.testing.assert_array_equal(pool(TWO_CHANNEL, "max"), [4.0, 0.0])


def test_avg_pool():
    np.testing.assert_array_equal(pool(TWO_CHANNEL, "avg"), [2.5, -0.75])


def test_meanstd_population_std():
    tensor = np.array([[[1.0, 3.0], [5.0, 7.0]]])  # single channel
    out = pool(tensor, "meanstd")
    np.testing.assert_allclose(out, [4.0, 2.23606797749979], rtol=0, atol=1e-12)


def test_meanstd_ordering_means_then_stds():
    out = pool(TWO_CHANNEL, "meanstd")
    assert out.shape == (4,)
    np.testing.assert_allclose(out[:2], TWO_CHANNEL.mean(axis=(1, 2)))
    np.testing.assert_allclose(out[2:], TWO_CHANNEL.std(axis=(1, 2)))
    assert (out[2:] >= 0).all()


def test_unfitted_pca_rejected():
    with pytest.raises(UnfittedPCA):
        pool(TWO_CHANNEL, "pca")


def test_max_pool_permutation_invariant():
    rng = np.random.default_rng(0)
    tensor = rng.normal(size=(3, 4, 5))
    shuffled = tensor.reshape(3, -1)
    shuffled = shuffled[:, rng.permutation(20)].reshape(3, 4, 5)
    np.testing.assert_array_equal(pool(tensor, "max"), pool(shuffled, "max"))


def test_scaling_homogeneity():
    rng = np.random.default_rng(1)
    tensor = rng.normal(size=(2, 3, 3))
    np.testing.assert_allclose(pool(3.5 * tensor, "avg"), 3.5 * pool(tensor, "avg"))
    np.testing.assert_allclose(pool(2.0 * tensor, "max"), 2.0 * pool(tensor, "max"))


# --- PCA ----------------------------------------------------------------------

def test_pca_identical_tensors_project_to_zero():
    tensor = np.arange(8.0).reshape(2, 2, 2)
    reducer = fit_pca([tensor, tensor, tensor], n_components=1)
    for _ in range(3):
        np.testing.assert_allclose(pool(tensor, reducer), [0.0], atol=1e-9)


def test_pca_line_reconstruction_vs_svd_oracle():
    # points on a 1-D line in flattened space: rank-1, zero reconstruction error
    rng = np.random.default_rng(2)
    direction = rng.normal(size=12)
    base = rng.normal(size=12)
    coords = rng.normal(size=8)
    samples = np.array([(base + c * direction).reshape(3, 2, 2) for c in coords])
    reducer = fit_pca(samples, n_components=1)
    flat = samples.reshape(8, -1)
    projected = (flat - reducer.mean) @ reducer.basis  # (8, 1)
    reconstructed = projected @ reducer.basis.T + reducer.mean
    assert np.abs(reconstructed - flat).max() < 1e-5
    # oracle: full SVD reconstruction with one component must agree
    u, s, vt = np.linalg.svd(flat - flat.mean(axis=0), full_matrices=False)
    oracle = u[:, :1] * s[:1] @ vt[:1] + flat.mean(axis=0)
    np.testing.assert_allclose(reconstructed, oracle, atol=1e-8)


def test_pca_too_few_samples():
    rng = np.random.default_rng(3)
    with pytest.raises(TooFewSamples):
        fit_pca(rng.normal(size=(5, 2, 2, 2)), n_components=10)


def test_pca_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        fit_pca([np.zeros((2, 2, 2)), np.zeros((2, 3, 2))], n_components=1)


def test_pca_basis_orthonormal_and_centered():
    rng = np.random.default_rng(4)
    samples = rng.normal(size=(12, 3, 4, 4))
    reducer = fit_pca(samples, n_components=10)
    gram = reducer.basis.T @ reducer.basis
    np.testing.assert_allclose(gram, np.eye(10), atol=1e-5)
    projections = np.array([pool(s, reducer) for s in samples])
    assert projections.shape == (12, 10)
    assert np.abs(projections.mean(axis=0)).max() < 1e-5


def test_pca_deterministic_sign():
    rng = np.random.default_rng(5)
    samples = rng.normal(size=(9, 2, 3, 3))
    a = fit_pca(samples, n_components=4)
    b = fit_pca(samples.copy(), n_components=4)
    np.testing.assert_array_equal(a.basis, b.basis)
    for j in range(4):
        col = a.basis[:, j]
        assert col[np.argmax(np.abs(col))] > 0


# --- batch --------------------------------------------------------------------

def tensor_manifest(n, shape):
    return DatasetManifest(
        samples=[SampleRecord(f"s{i}", "WILD", i) for i in range(n)],
        data_file="activations.bin",
        tensor_shape=shape,
    )


def test_pool_batch_shape_and_equivalence():
    rng = np.random.default_rng(6)
    shape = (2, 3, 3)
    flat = rng.normal(size=(5, np.prod(shape))).astype(np.float32)
    manifest = tensor_manifest(5, shape)
    pooled_manifest, pooled = pool_batch(manifest, flat, "max")
    assert pooled.shape == (5, 2)
    assert pooled_manifest.feature_dim == 2
    assert pooled_manifest.tensor_shape is None
    singles = np.array([pool(row.reshape(shape), "max") for row in flat], dtype=np.float32)
    np.testing.assert_array_equal(pooled, singles)


def test_pool_batch_pca_shape_contract():
    rng = np.random.default_rng(7)
    shape = (3, 4, 4)
    stack = rng.normal(size=(12, *shape))
    reducer = fit_pca(stack, n_components=10)
    manifest = tensor_manifest(12, shape)
    _, pooled = pool_batch(manifest, stack.reshape(12, -1), reducer)
    assert pooled.shape == (12, 10)


def test_pool_batch_error_carries_sample_id():
    manifest = tensor_manifest(2, (1, 2, 2))
    flat = np.zeros((2, 4), dtype=np.float32)
    with pytest.raises(UnfittedPCA, match="s0"):
        pool_batch(manifest, flat, "pca")
