"""Observation operators: cyclic convolution and Gaussian compressive sampling.

Both operators expose the same surface: ``apply`` (A x), ``apply_adjoint``
(A^T y) and ``solve_regularized``, the regularised normal-equation action

    (A^T A + mu I)^{-1} vec(rhs)

that forms the quadratic step of splitting solvers.  The cyclic operator
diagonalises A^T A in the 2-D Fourier domain, so the solve is a per-frequency
scalar division.  The compressive operator applies the matrix inversion
lemma,

    (A^T A + mu I)^{-1} = (1/mu) (I - A^T (A A^T + mu I)^{-1} A),

so only an M x M system is ever factorised; the factorisation is computed
once per penalty value and cached.

Images enter and leave as 2-D arrays; the compressive operator flattens
them in row-major (C) order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .image import as_image
from .seeds import stream_rng

KERNEL_SUM_TOL = 1e-12


@dataclass(frozen=True)
class BlurKernel:
    """Square convolution kernel with odd side and taps summing to one.

    ``pre_normalization_sum`` records the tap sum before normalisation when
    the kernel came from a file or a raw tap array (1.0 for kernels that
    were already normalised).
    """

    taps: np.ndarray
    pre_normalization_sum: float = 1.0

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 2 or taps.shape[0] != taps.shape[1]:
            raise ValueError(f"kernel taps must be square, got shape {taps.shape}")
        if taps.shape[0] % 2 == 0:
            raise ValueError(f"kernel side must be odd, got {taps.shape[0]}")
        if not np.all(np.isfinite(taps)):
            raise ValueError("kernel taps contain non-finite values")
        if abs(float(taps.sum()) - 1.0) > KERNEL_SUM_TOL:
            raise ValueError(f"kernel taps must sum to 1, got {taps.sum()!r}")
        taps = taps.copy()
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @property
    def side(self) -> int:
        return self.taps.shape[0]


def normalized_kernel(taps) -> BlurKernel:
    """Build a BlurKernel from raw taps, normalising them to unit sum."""
    taps = np.asarray(taps, dtype=np.float64)
    raw_sum = float(taps.sum())
    if not np.isfinite(raw_sum) or abs(raw_sum) < 1e-300:
        raise ValueError("kernel taps must have a finite, nonzero sum")
    return BlurKernel(taps / raw_sum, pre_normalization_sum=raw_sum)


def load_kernel(path) -> BlurKernel:
    """Read a kernel from a plain-text file: first line the side, then the
    taps row-major.  Taps are normalised to unit sum on load."""
    with open(path, "r", encoding="ascii") as fh:
        tokens = fh.read().split()
    if not tokens:
        raise ValueError(f"empty kernel file {path}")
    try:
        side = int(tokens[0])
        values = np.array([float(t) for t in tokens[1:]], dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"malformed kernel file {path}: {exc}") from exc
    if side < 1 or values.size != side * side:
        raise ValueError(f"kernel file {path} declares side {side} but has "
                         f"{values.size} taps")
    return normalized_kernel(values.reshape(side, side))


def save_kernel(kernel: BlurKernel, path) -> None:
    """Write a kernel in the plain-text format read by :func:`load_kernel`."""
    lines = [str(kernel.side)]
    for row in kernel.taps:
        lines.append(" ".join(repr(float(t)) for t in row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


class CyclicConvolutionOperator:
    """Circular 2-D convolution, diagonalised by the 2-D DFT.

    The kernel is embedded with its centre tap at index (0, 0) and cyclic
    wrap-around, so the operator introduces no global shift.
    """

    def __init__(self, kernel: BlurKernel, shape):
        h, w = int(shape[0]), int(shape[1])
        if kernel.side > min(h, w):
            raise ValueError(f"kernel side {kernel.side} exceeds image shape {(h, w)}")
        self.kernel = kernel
        self.input_shape = (h, w)
        self.output_length = h * w
        c = kernel.side // 2
        psf = np.zeros((h, w))
        rows = (np.arange(kernel.side) - c) % h
        cols = (np.arange(kernel.side) - c) % w
        psf[np.ix_(rows, cols)] = kernel.taps
        transfer = np.fft.fft2(psf)
        transfer.setflags(write=False)
        self.transfer = transfer

    def _check_image(self, x) -> np.ndarray:
        x = as_image(x)
        if x.shape != self.input_shape:
            raise ValueError(f"expected image of shape {self.input_shape}, got {x.shape}")
        return x

    def apply(self, x) -> np.ndarray:
        """Circular convolution of ``x`` with the kernel."""
        x = self._check_image(x)
        return np.fft.ifft2(np.fft.fft2(x) * self.transfer).real

    def apply_adjoint(self, y) -> np.ndarray:
        """Circular correlation (convolution with the flipped kernel)."""
        y = self._check_image(y)
        return np.fft.ifft2(np.fft.fft2(y) * np.conj(self.transfer)).real

    def solve_regularized(self, rhs, mu) -> np.ndarray:
        """Apply (A^T A + mu I)^{-1} via per-frequency division."""
        rhs = self._check_image(rhs)
        if mu <= 0.0:
            raise ValueError("mu must be positive")
        denom = np.abs(self.transfer) ** 2 + mu
        return np.fft.ifft2(np.fft.fft2(rhs) / denom).real


def build_cyclic(kernel: BlurKernel, shape) -> CyclicConvolutionOperator:
    """Cyclic convolution operator for a kernel on the given image shape."""
    return CyclicConvolutionOperator(kernel, shape)


class CompressiveGaussianOperator:
    """Random Gaussian measurement of a flattened image.

    Entries are i.i.d. N(0, 1/M) from the seeded ``matrix`` stream, so rows
    have unit squared norm in expectation.  ``solve_regularized`` never forms
    the N x N system; it solves through the cached M x M factorisation of
    (A A^T + mu I).  Requesting a new ``mu`` extends the cache rather than
    raising.
    """

    def __init__(self, shape, n_measurements, mu, seed):
        h, w = int(shape[0]), int(shape[1])
        n = h * w
        m = int(n_measurements)
        if m >= n:
            raise ValueError(f"n_measurements must be < {n}, got {m}")
        if m < 1:
            raise ValueError("n_measurements must be positive")
        if mu <= 0.0:
            raise ValueError("mu must be positive")
        self.input_shape = (h, w)
        self.output_length = m
        self.seed = int(seed)
        self.mu = float(mu)
        rng = stream_rng(self.seed, "matrix")
        matrix = rng.standard_normal((m, n)) / math.sqrt(m)
        matrix.setflags(write=False)
        self.matrix = matrix
        self._factors: dict[float, tuple] = {}
        self._gram_factor(self.mu)

    def _gram_factor(self, mu: float):
        mu = float(mu)
        if mu not in self._factors:
            gram = self.matrix @ self.matrix.T
            gram[np.diag_indices_from(gram)] += mu
            self._factors[mu] = cho_factor(gram, lower=True)
        return self._factors[mu]

    def _check_image(self, x) -> np.ndarray:
        x = as_image(x)
        if x.shape != self.input_shape:
            raise ValueError(f"expected image of shape {self.input_shape}, got {x.shape}")
        return x

    def apply(self, x) -> np.ndarray:
        """Measurement vector A vec(x), length M."""
        x = self._check_image(x)
        return self.matrix @ x.ravel()

    def apply_adjoint(self, y) -> np.ndarray:
        """Back-projection A^T y, reshaped to the image grid."""
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.output_length,):
            raise ValueError(f"expected measurement vector of length "
                             f"{self.output_length}, got shape {y.shape}")
        return (self.matrix.T @ y).reshape(self.input_shape)

    def solve_regularized(self, rhs, mu) -> np.ndarray:
        """Apply (A^T A + mu I)^{-1} through the inversion-lemma identity."""
        rhs = self._check_image(rhs)
        if mu <= 0.0:
            raise ValueError("mu must be positive")
        z = rhs.ravel()
        t = cho_solve(self._gram_factor(mu), self.matrix @ z)
        out = (z - self.matrix.T @ t) / mu
        return out.reshape(self.input_shape)


def build_compressive(shape, n_measurements, mu, seed) -> CompressiveGaussianOperator:
    """Seeded Gaussian measurement operator with a precomputed Gram factor."""
    return CompressiveGaussianOperator(shape, n_measurements, mu, seed)
