"""Symmetric eigen machinery and the whitening/coloring feature transform.

A feature map flattened to channels x samples carries second-order image
statistics in its covariance. Whitening removes the content's covariance
structure, coloring imposes the style's covariance and mean, and the
blend of the two is the closed-form style transfer used by the stylizer
stack.

All matrix work runs in float64 internally: feature covariances at small
sample counts are rank deficient often enough that single precision is
not worth the trouble. The eigensolver is cyclic Jacobi, which is simple,
robust for the channel counts involved (<= 256), and easy to test.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    ContractError,
    DegenerateInputError,
    DimensionError,
    NumericError,
)

EPS_REG_DEFAULT = 1e-5    # ridge added to covariances; handles flat channels
EIG_FLOOR_DEFAULT = 1e-8  # eigenvalue floor before fractional powers

_JACOBI_TOL = 1e-10
_JACOBI_MAX_SWEEPS = 100


@dataclass
class FeatureMatrix:
    """Channels x samples feature values, with the mean recorded once centered."""

    values: np.ndarray
    mean: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DimensionError(f"FeatureMatrix needs a 2-D array, got shape {self.values.shape}")
        if self.mean is not None:
            self.mean = np.asarray(self.mean, dtype=np.float64)

    @classmethod
    def from_map(cls, fmap):
        """Flatten a (C, H, W) or (1, C, H, W) feature map to C x (H*W)."""
        arr = np.asarray(fmap, dtype=np.float64)
        if arr.ndim == 4:
            if arr.shape[0] != 1:
                raise DimensionError(f"from_map expects a single map, got batch of {arr.shape[0]}")
            arr = arr[0]
        if arr.ndim != 3:
            raise DimensionError(f"from_map needs (C, H, W), got shape {arr.shape}")
        c = arr.shape[0]
        return cls(arr.reshape(c, -1).copy())

    @property
    def channels(self):
        return self.values.shape[0]

    @property
    def samples(self):
        return self.values.shape[1]

    def copy(self):
        return FeatureMatrix(self.values.copy(), None if self.mean is None else self.mean.copy())


@dataclass
class EigDecomp:
    """Eigenvalues (descending) and column-orthonormal eigenvectors."""

    eigvals: np.ndarray
    eigvecs: np.ndarray


def covariance(f: FeatureMatrix, eps_reg=EPS_REG_DEFAULT):
    """Center ``f`` in place (recording its mean) and return its regularized covariance.

    Normalizer is 1/N, matching the feature-statistics use; the ridge
    ``eps_reg * I`` keeps flat channels invertible. The result is exactly
    symmetric.
    """
    if eps_reg < 0:
        raise ConfigurationError(f"covariance: eps_reg must be >= 0, got {eps_reg}")
    c, n = f.values.shape
    if n < 2:
        raise DegenerateInputError(f"covariance needs at least 2 samples, got {n}")
    mu = f.values.mean(axis=1)
    f.values -= mu[:, None]
    f.mean = mu
    cov = f.values @ f.values.T / n
    cov = (cov + cov.T) * 0.5  # gemm output is symmetric only up to roundoff
    cov[np.diag_indices(c)] += eps_reg
    return cov


def _max_offdiag(a):
    if a.shape[0] < 2:
        return 0.0
    return float(np.abs(np.triu(a, 1)).max())


def sym_eig(a):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the largest off-diagonal entry falls below
    1e-10 * ||A||_F or 100 sweeps elapse (the latter raises). Eigenpairs
    come back sorted descending, with each eigenvector's first nonzero
    component made positive so results are reproducible.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"sym_eig needs a square matrix, got shape {a.shape}")
    if a.shape[0] == 0:
        raise DimensionError("sym_eig: empty matrix")
    asym = float(np.abs(a - a.T).max())
    if asym >= 1e-8:
        raise ContractError(f"sym_eig: input is not symmetric (max |A - A^T| = {asym:.3e})")
    n = a.shape[0]
    a = (a + a.T) * 0.5
    v = np.eye(n)
    norm_f = float(np.linalg.norm(a))
    if norm_f == 0.0 or n == 1:
        return _sorted_decomp(np.diag(a).copy(), v)
    tol = _JACOBI_TOL * norm_f
    converged = False
    for _ in range(_JACOBI_MAX_SWEEPS):
        if _max_offdiag(a) <= tol:
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                # threshold strategy: sub-tolerance entries are already done,
                # and the convergence check above stays the arbiter
                if abs(apq) <= tol:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.hypot(1.0, tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # A <- J^T A J applied as a column then a row rotation
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                v_p, v_q = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * v_p - s * v_q
                v[:, q] = s * v_p + c * v_q
    if not converged and _max_offdiag(a) > tol:
        raise NumericError(
            f"sym_eig: no convergence in {_JACOBI_MAX_SWEEPS} sweeps "
            f"(off-diagonal residual {_max_offdiag(a):.3e})")
    return _sorted_decomp(np.diag(a).copy(), v)


def _sorted_decomp(eigvals, eigvecs):
    order = np.argsort(-eigvals, kind="stable")
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    for j in range(eigvecs.shape[1]):
        col = eigvecs[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            eigvecs[:, j] = -col
    return EigDecomp(eigvals, eigvecs)


def mat_power_sym(a, power, eig_floor=EIG_FLOOR_DEFAULT):
    """V diag(max(lambda, floor)^p) V^T for a symmetric matrix."""
    if eig_floor <= 0:
        raise ConfigurationError(f"mat_power_sym: eig_floor must be positive, got {eig_floor}")
    dec = sym_eig(a)
    lam = np.maximum(dec.eigvals, eig_floor) ** power
    return (dec.eigvecs * lam[None, :]) @ dec.eigvecs.T


def whiten(f: FeatureMatrix, eps_reg=EPS_REG_DEFAULT, eig_floor=EIG_FLOOR_DEFAULT):
    """cov(f)^(-1/2) (f - mean): zero mean and near-identity covariance.

    Works on an internal copy; the caller's matrix is left untouched.
    """
    g = f.copy()
    cov = covariance(g, eps_reg)
    w = mat_power_sym(cov, -0.5, eig_floor)
    return FeatureMatrix(w @ g.values, mean=np.zeros(g.channels))


def color(f_w: FeatureMatrix, style: FeatureMatrix, eps_reg=EPS_REG_DEFAULT,
          eig_floor=EIG_FLOOR_DEFAULT):
    """cov(style)^(1/2) f_w + mean(style); f_w must already be whitened."""
    if f_w.channels != style.channels:
        raise DimensionError(
            f"color: channel counts differ, {f_w.channels} vs {style.channels}")
    s = style.copy()
    cov_s = covariance(s, eps_reg)
    half = mat_power_sym(cov_s, 0.5, eig_floor)
    return FeatureMatrix(half @ f_w.values + s.mean[:, None], mean=s.mean.copy())


def wct(content: FeatureMatrix, style: FeatureMatrix, alpha=1.0,
        eps_reg=EPS_REG_DEFAULT, eig_floor=EIG_FLOOR_DEFAULT):
    """Blend of the color(whiten(content), style) transform with the raw content.

    alpha 1 is full statistics transfer, alpha 0 returns the (un-centered)
    content exactly, and intermediate alphas are exact linear blends.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ConfigurationError(f"wct: alpha must lie in [0, 1], got {alpha}")
    if alpha == 0.0:
        return content.copy()
    colored = color(whiten(content, eps_reg, eig_floor), style, eps_reg, eig_floor)
    blended = alpha * colored.values + (1.0 - alpha) * content.values
    return FeatureMatrix(blended)
