"""Spatial downsampling of raw C x H x W activation tensors to 1-D vectors.

Four reducers:

* ``meanstd`` -- per-channel mean and population standard deviation over the
  spatial grid, concatenated as [mean_0..mean_{C-1}, std_0..std_{C-1}] (2C values);
* ``avg`` -- global average pooling, one value per channel (C values);
* ``max`` -- global max pooling, one value per channel (C values);
* PCA -- flatten the tensor and project onto a basis fitted from a sample
  set (``fit_pca``), centered by the fitted mean.

The PCA basis comes from a centered SVD with a deterministic sign
convention (the largest-magnitude entry of every basis vector is positive)
so repeated fits on the same data are bitwise identical.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import DatasetManifest
from .errors import (
    ConfigError,
    EmptyTensor,
    ShapeMismatch,
    TardisError,
    TooFewSamples,
    UnfittedPCA,
)

POOLING_METHODS = ("meanstd", "avg", "max", "pca")
DEFAULT_PCA_COMPONENTS = 10


@dataclass
class PcaReducer:
    """Fitted PCA projection for flattened activation tensors."""

    mean: np.ndarray   # (C*H*W,)
    basis: np.ndarray  # (C*H*W, n_components), orthonormal columns
    tensor_shape: tuple[int, int, int]

    @property
    def n_components(self) -> int:
        return self.basis.shape[1]

    def project(self, flat: np.ndarray) -> np.ndarray:
        return (np.asarray(flat, dtype=np.float64) - self.mean) @ self.basis


def _as_tensor(tensor: np.ndarray) -> np.ndarray:
    t = np.asarray(tensor, dtype=np.float64)
    if t.ndim != 3:
        raise ShapeMismatch(f"expected a (C, H, W) tensor, got shape {t.shape}")
    if t.size == 0:
        raise EmptyTensor("activation tensor has no elements")
    return t


def pool(tensor: np.ndarray, method) -> np.ndarray:
    """Reduce one (C, H, W) tensor to a 1-D feature vector.

    ``method`` is one of the strings "meanstd" / "avg" / "max", or a fitted
    :class:`PcaReducer`. The bare string "pca" is rejected: a basis must be
    fitted first.
    """
    if isinstance(method, PcaReducer):
        t = _as_tensor(tensor)
        if t.shape != method.tensor_shape:
            raise ShapeMismatch(
                f"tensor shape {t.shape} != fitted shape {method.tensor_shape}"
            )
        return method.project(t.reshape(-1))
    if method == "pca":
        raise UnfittedPCA("fit a PCA basis with fit_pca() before pooling")
    t = _as_tensor(tensor)
    if method == "meanstd":
        return np.concatenate([t.mean(axis=(1, 2)), t.std(axis=(1, 2))])
    if method == "avg":
        return t.mean(axis=(1, 2))
    if method == "max":
        return t.max(axis=(1, 2))
    raise ConfigError(f"unknown pooling method {method!r}")


def output_dim(method, tensor_shape: tuple[int, int, int]) -> int:
    c = int(tensor_shape[0])
    if isinstance(method, PcaReducer):
        return method.n_components
    return {"meanstd": 2 * c, "avg": c, "max": c}.get(method) or _bad_method(method)


def _bad_method(method):
    raise ConfigError(f"unknown pooling method {method!r}")


def fit_pca(samples, n_components: int = DEFAULT_PCA_COMPONENTS) -> PcaReducer:
    """Fit an orthonormal PCA basis over flattened tensors.

    ``samples`` is a sequence of (C, H, W) arrays or one (n, C, H, W) stack.
    Requires at least n_components samples; all tensors must share a shape.
    """
    try:
        stack = np.asarray(samples, dtype=np.float64)
    except ValueError as exc:
        raise ShapeMismatch(f"samples do not share one shape: {exc}") from exc
    if stack.ndim == 3:
        stack = stack[None]
    if stack.ndim != 4:
        raise ShapeMismatch(f"expected (n, C, H, W) samples, got shape {stack.shape}")
    n, c, h, w = stack.shape
    if n_components < 1:
        raise ConfigError(f"n_components must be >= 1, got {n_components}")
    if n < n_components:
        raise TooFewSamples(f"need >= {n_components} samples to fit PCA, got {n}")
    flat = stack.reshape(n, -1)
    if n_components > flat.shape[1]:
        raise TooFewSamples(
            f"n_components {n_components} exceeds flattened size {flat.shape[1]}"
        )
    mean = flat.mean(axis=0)
    _, _, vt = np.linalg.svd(flat - mean, full_matrices=False)
    basis = vt[:n_components].T.copy()
    # sign convention: flip each component so its largest-magnitude entry is positive
    for j in range(basis.shape[1]):
        i = int(np.argmax(np.abs(basis[:, j])))
        if basis[i, j] < 0:
            basis[:, j] = -basis[:, j]
    return PcaReducer(mean=mean, basis=basis, tensor_shape=(c, h, w))


def pool_batch(
    manifest: DatasetManifest, values: np.ndarray, method
) -> tuple[DatasetManifest, np.ndarray]:
    """Pool every sample of a raw-tensor dataset; order preserved.

    ``values`` is the flattened (n, C*H*W) matrix as returned by
    ``load_dataset``. The result manifest keeps the same samples but carries
    ``feature_dim`` instead of ``tensor_shape``.
    """
    if manifest.tensor_shape is None:
        raise ConfigError("pool_batch needs a manifest with tensor_shape (raw activations)")
    shape = manifest.tensor_shape
    values = np.asarray(values)
    out = None
    by_row = {s.row: s.sample_id for s in manifest.samples}
    for i in range(values.shape[0]):
        try:
            vec = pool(values[i].reshape(shape), method)
        except TardisError as exc:
            raise type(exc)(f"sample {by_row.get(i, i)!r}: {exc}") from exc
        if out is None:
            out = np.empty((values.shape[0], vec.shape[0]), dtype=np.float32)
        out[i] = vec
    if out is None:
        out = np.empty((0, output_dim(method, shape)), dtype=np.float32)
    pooled_manifest = replace(
        manifest,
        samples=[replace(s) for s in manifest.samples],
        feature_dim=out.shape[1],
        tensor_shape=None,
        data_file="features.bin",
    )
    return pooled_manifest, out
