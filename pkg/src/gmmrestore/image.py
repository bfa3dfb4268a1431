"""Grayscale images, file I/O, and reconstruction-quality metrics.

An image is a 2-D float64 array of intensities in the nominal [0, 255]
range.  All metrics use the 8-bit convention (PSNR peak fixed at 255) and
are computed over the full image, with no border cropping.  Identical
images map to an infinite-dB sentinel (``math.inf``) rather than an error.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from PIL import Image as _PilImage

PEAK = 255.0


def as_image(values) -> np.ndarray:
    """Validate ``values`` as an image and return it as a 2-D float64 array."""
    img = np.asarray(values, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"expected a non-empty 2-D image array, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


def load_image(path) -> np.ndarray:
    """Load an 8-bit grayscale PGM or PNG as float64 intensities in [0, 255].

    Colour inputs are converted by averaging the R, G and B channels.
    Raises ``OSError`` for unreadable files and ``ValueError`` for
    unsupported formats or pixel modes.
    """
    with _PilImage.open(path) as im:
        if im.format not in ("PNG", "PPM"):
            raise ValueError(f"unsupported image format {im.format!r} for {path}; "
                             "expected 8-bit PGM or PNG")
        if im.mode == "P":
            im = im.convert("RGB")
        if im.mode in ("1", "L"):
            arr = np.asarray(im.convert("L"), dtype=np.float64)
        elif im.mode in ("RGB", "RGBA"):
            rgb = np.asarray(im.convert("RGBA") if im.mode == "RGBA" else im,
                             dtype=np.float64)
            arr = rgb[:, :, :3].mean(axis=2)
        else:
            raise ValueError(f"unsupported pixel mode {im.mode!r} for {path}; "
                             "only 8-bit grayscale or RGB inputs are accepted")
    return as_image(arr)


def save_image(img, path) -> None:
    """Write an image as 8-bit PGM (``.pgm``) or PNG (``.png``).

    Values are clamped to [0, 255] and rounded to the nearest integer.
    """
    img = as_image(img)
    data = np.rint(np.clip(img, 0.0, PEAK)).astype(np.uint8)
    suffix = Path(path).suffix.lower()
    if suffix == ".png":
        fmt = "PNG"
    elif suffix == ".pgm":
        fmt = "PPM"
    else:
        raise ValueError(f"unsupported output extension {suffix!r}; use .png or .pgm")
    _PilImage.fromarray(data, mode="L").save(path, format=fmt)


def _check_same_shape(*images):
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise ValueError(f"images must share dimensions, got {sorted(shapes)}")


def psnr(reference, estimate) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` when the images are identical."""
    reference = as_image(reference)
    estimate = as_image(estimate)
    _check_same_shape(reference, estimate)
    sse = float(np.sum((reference - estimate) ** 2))
    if sse == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK * reference.size / sse)


def isnr(clean, degraded, restored) -> float:
    """Improvement in SNR: dB reduction of error energy relative to ``degraded``.

    ``inf`` when ``restored`` equals ``clean`` exactly.
    """
    clean = as_image(clean)
    degraded = as_image(degraded)
    restored = as_image(restored)
    _check_same_shape(clean, degraded, restored)
    sse_degraded = float(np.sum((degraded - clean) ** 2))
    sse_restored = float(np.sum((restored - clean) ** 2))
    if sse_restored == 0.0:
        return math.inf
    if sse_degraded == 0.0:
        return -math.inf
    return 10.0 * math.log10(sse_degraded / sse_restored)


def nmse_db(clean, restored) -> float:
    """Normalised MSE, sum((restored-clean)^2) / sum(clean^2), in dB.

    ``-inf`` when ``restored`` equals ``clean``; raises on an all-zero
    ``clean`` image (the normaliser vanishes).
    """
    clean = as_image(clean)
    restored = as_image(restored)
    _check_same_shape(clean, restored)
    denom = float(np.sum(clean ** 2))
    if denom == 0.0:
        raise ValueError("nmse_db is undefined for an all-zero clean image")
    num = float(np.sum((restored - clean) ** 2))
    if num == 0.0:
        return -math.inf
    return 10.0 * math.log10(num / denom)


def bsnr(blurred_noiseless, noise_variance) -> float:
    """Blurred SNR: 10*log10(var(blurred) / noise_variance) in dB.

    The variance is the per-image empirical variance about the mean of the
    noiseless blurred image.
    """
    blurred_noiseless = as_image(blurred_noiseless)
    if noise_variance <= 0.0:
        raise ValueError("noise_variance must be positive")
    var = float(blurred_noiseless.var())
    if var == 0.0:
        return -math.inf
    return 10.0 * math.log10(var / noise_variance)
