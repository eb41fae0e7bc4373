"""Downsampling raw activation tensors into 1-D feature vectors.

Global max pooling keeps the most prominent response per channel and is
the default choice; mean+std, average pooling, and a fitted PCA basis are
the alternatives.
"""

import numpy as np

from tardis import fit_pca, pool

rng = np.random.default_rng(1)
tensor = rng.normal(size=(4, 8, 8))  # one sample: 4 channels, 8x8 spatial grid

print("input tensor:", tensor.shape)
for method in ("max", "avg", "meanstd"):
    vector = pool(tensor, method)
    print(f"{method:>8}: length {vector.shape[0]}, first entries {np.round(vector[:4], 3)}")

# PCA needs a fitted basis: ten components over a small sample set
samples = rng.normal(size=(30, 4, 8, 8))
reducer = fit_pca(samples, n_components=10)
vector = pool(tensor, reducer)
print(f"{'pca':>8}: length {vector.shape[0]}, first entries {np.round(vector[:4], 3)}")

# fitted-set projections are centered by construction
projections = np.array([pool(s, reducer) for s in samples])
print("\nper-component projection means (fitted set):",
      np.round(np.abs(projections.mean(axis=0)).max(), 8))
