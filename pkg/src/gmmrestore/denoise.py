"""Whole-image MMSE denoising under a Gaussian-mixture patch prior.

The image is covered by overlapping square patches on a stride grid that is
snapped to the borders (the last row/column of patches always touches the
image edge, so every pixel is covered).  Each patch is filtered by the
closed-form posterior mean under the mixture prior with additive white
Gaussian noise of the given variance,

    xhat = sum_k beta_k(z) [ mu_k + Sigma_k (Sigma_k + sigma^2 I)^{-1} (z - mu_k) ],

with beta_k the noisy-patch posterior weights, and the filtered patches are
aggregated by per-pixel uniform averaging.  Patch means (DC) are optionally
removed before filtering and restored afterwards, matching a mixture trained
on DC-removed patches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import logsumexp

from .gmm import GmmModel, log_densities
from .image import as_image

DC_MODES = ("subtract_mean", "none")

# Patch rows per vectorised block; bounds the K*(chunk)*d workspace.
_CHUNK = 16384


@dataclass(frozen=True)
class DenoiserConfig:
    patch_side: int = 6
    stride: int = 1
    dc_handling: str = "subtract_mean"

    def __post_init__(self):
        if self.patch_side < 1:
            raise ValueError("patch_side must be positive")
        if not 1 <= self.stride <= self.patch_side:
            raise ValueError("stride must satisfy 1 <= stride <= patch_side")
        if self.dc_handling not in DC_MODES:
            raise ValueError(f"dc_handling must be one of {DC_MODES}")


@dataclass(frozen=True)
class PatchSet:
    """Vectorized patches plus their top-left origins in the source image."""

    side: int
    values: np.ndarray       # (n, side*side), row-major pixel order
    origins: np.ndarray      # (n, 2) as (row, col)
    image_shape: tuple[int, int]


def patch_origins(extent: int, side: int, stride: int) -> np.ndarray:
    """Stride-grid origins along one axis, snapped so the last patch touches
    the border."""
    last = extent - side
    grid = list(range(0, last + 1, stride))
    if grid[-1] != last:
        grid.append(last)
    return np.asarray(grid, dtype=np.intp)


def extract_patches(img, cfg: DenoiserConfig = DenoiserConfig()) -> PatchSet:
    """All patches on the border-snapped stride grid, in row-major origin order."""
    img = as_image(img)
    h, w = img.shape
    s = cfg.patch_side
    if h < s or w < s:
        raise ValueError(f"image {img.shape} smaller than one {s}x{s} patch")
    rows = patch_origins(h, s, cfg.stride)
    cols = patch_origins(w, s, cfg.stride)
    windows = sliding_window_view(img, (s, s))[np.ix_(rows, cols)]
    values = windows.reshape(rows.size * cols.size, s * s).copy()
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    origins = np.stack([rr.ravel(), cc.ravel()], axis=1)
    return PatchSet(side=s, values=values, origins=origins, image_shape=(h, w))


def average_patches(values, origins, side: int, image_shape) -> np.ndarray:
    """Reassemble an image by uniform per-pixel averaging of patch values.

    Origins must be unique and the patches must jointly cover every pixel
    (guaranteed for a :func:`extract_patches` grid).
    """
    values = np.asarray(values, dtype=np.float64)
    origins = np.asarray(origins)
    h, w = image_shape
    acc = np.zeros((h, w))
    count = np.zeros((h, w))
    r, c = origins[:, 0], origins[:, 1]
    vals = values.reshape(-1, side, side)
    for i in range(side):
        for j in range(side):
            acc[r + i, c + j] += vals[:, i, j]
            count[r + i, c + j] += 1.0
    if count.min() < 1.0:
        raise ValueError("patch grid does not cover every pixel")
    return acc / count


def mmse_denoise_patches(model: GmmModel, patches, noise_variance: float) -> np.ndarray:
    """Closed-form posterior-mean filter for a batch of patch vectors (n, d)."""
    x = np.asarray(patches, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise ValueError(f"expected patches of dimension {model.dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("patches contain non-finite values")
    if noise_variance < 0.0:
        raise ValueError("noise_variance must be nonnegative")

    n, d = x.shape
    k = model.n_components
    log_w = np.log(model.weights)
    out = np.empty_like(x)
    for start in range(0, n, _CHUNK):
        z = x[start:start + _CHUNK]
        c = z.shape[0]
        logp = np.empty((c, k))
        filtered = np.empty((k, c, d))
        for j in range(k):
            lam = model.eigenvalues[j]
            shifted = lam + noise_variance
            vec = model.eigenvectors[j]
            y = (z - model.means[j]) @ vec
            logp[:, j] = log_w[j] - 0.5 * (d * np.log(2.0 * np.pi)
                                           + np.log(shifted).sum()
                                           + (y * y / shifted).sum(axis=1))
            filtered[j] = (y * (lam / shifted)) @ vec.T + model.means[j]
        beta = np.exp(logp - logsumexp(logp, axis=1, keepdims=True))
        out[start:start + _CHUNK] = np.einsum("ck,kcd->cd", beta, filtered)
    return out


def mmse_denoise_patch(model: GmmModel, noisy, noise_variance: float) -> np.ndarray:
    """Posterior-mean estimate of a single patch vector."""
    noisy = np.asarray(noisy, dtype=np.float64)
    if noisy.ndim != 1:
        raise ValueError(f"expected a single patch vector, got shape {noisy.shape}")
    return mmse_denoise_patches(model, noisy[None, :], noise_variance)[0]


def denoise_image(model: GmmModel, img, noise_variance: float,
                  cfg: DenoiserConfig = DenoiserConfig()) -> np.ndarray:
    """Denoise a full image: extract, filter per patch, average overlaps."""
    img = as_image(img)
    if model.dim != cfg.patch_side ** 2:
        raise ValueError(f"model dimension {model.dim} does not match "
                         f"{cfg.patch_side}x{cfg.patch_side} patches")
    ps = extract_patches(img, cfg)
    z = ps.values
    if cfg.dc_handling == "subtract_mean":
        dc = z.mean(axis=1, keepdims=True)
        filtered = mmse_denoise_patches(model, z - dc, noise_variance) + dc
    else:
        filtered = mmse_denoise_patches(model, z, noise_variance)
    return average_patches(filtered, ps.origins, ps.side, ps.image_shape)
