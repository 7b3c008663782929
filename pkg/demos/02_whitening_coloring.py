"""The closed-form statistics transfer behind the stylizer.

Whitening strips a feature matrix of its channel covariance; coloring
imposes another matrix's covariance and mean. Composed, they move the
second-order statistics of one image's features onto another's in a
single linear step, with an alpha blend controlling the strength.
"""

import numpy as np

from retinagen.linalg import FeatureMatrix, covariance, sym_eig, whiten, color, wct

rng = np.random.default_rng(7)


def cov_of(values):
    c = values - values.mean(axis=1, keepdims=True)
    return c @ c.T / values.shape[1]


def summarize(name, values):
    cov = cov_of(values)
    off = np.abs(cov - np.diag(np.diag(cov))).max()
    print(f"{name:<22} mean {values.mean():+.3f}   var range "
          f"[{np.diag(cov).min():.3f}, {np.diag(cov).max():.3f}]   max |off-diag| {off:.3f}")


# features with a deliberately lopsided covariance
mix = np.array([[2.0, 1.5, 0.0, 0.0],
                [0.0, 0.5, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.9],
                [0.0, 0.0, 0.0, 0.2]])
content = mix @ rng.normal(size=(4, 800)) + np.array([[1.0], [0.0], [-2.0], [0.5]])
style = 0.3 * rng.normal(size=(4, 800)) + 4.0

print("eigendecomposition (cyclic Jacobi)")
print("-" * 60)
cov = covariance(FeatureMatrix(content.copy()), eps_reg=0.0)
dec = sym_eig(cov)
print(f"covariance eigenvalues: {np.round(dec.eigvals, 3)}")
rec = dec.eigvecs @ np.diag(dec.eigvals) @ dec.eigvecs.T
print(f"reconstruction residual: {np.abs(rec - cov).max():.2e}\n")

print("whiten, then color with the style statistics")
print("-" * 60)
summarize("content", content)
white = whiten(FeatureMatrix(content.copy()))
summarize("whitened", white.values)
colored = color(white, FeatureMatrix(style.copy()))
summarize("colored by style", colored.values)
summarize("style itself", style)

print()
print("alpha blends between content and full transfer")
print("-" * 60)
for alpha in (0.0, 0.5, 1.0):
    out = wct(FeatureMatrix(content.copy()), FeatureMatrix(style.copy()), alpha=alpha)
    summarize(f"wct alpha={alpha}", out.values)
