"""Gaussian mixture model over vectorized image patches.

Full-covariance mixtures fitted by EM from clean patch corpora.  Every
covariance is kept together with its eigendecomposition, so operations that
need (Sigma + sigma^2 I)^{-1} (noisy-patch posteriors, MMSE filtering) only
shift the cached eigenvalues.  Covariance eigenvalues are clamped to a
variance floor, which is the exact maximiser of the M-step objective over
the floored positive-definite cone and therefore preserves the monotone
ascent of EM.
"""

from __future__ import annotations

import math
import zipfile
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .seeds import stream_rng

_LOG_2PI = math.log(2.0 * math.pi)

MODEL_FORMAT_VERSION = 1

# Initialisation runs k-means++ seeding on at most this many patches.
_INIT_SUBSAMPLE_MAX = 20000

# Components whose responsibility mass drops below this fraction of the
# dataset are re-seeded at the worst-explained patch.
_DEGENERATE_MASS_FRACTION = 1e-8


@dataclass(frozen=True)
class EmConfig:
    """EM fitting settings; all randomness derives from ``seed``."""

    max_iterations: int = 100
    tolerance: float = 1e-6
    variance_floor: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.tolerance <= 0.0:
            raise ValueError("tolerance must be positive")
        if self.variance_floor <= 0.0:
            raise ValueError("variance_floor must be positive")


class GmmModel:
    """Immutable K-component Gaussian mixture over d-dimensional vectors.

    Construction validates the mixture invariants (weights on the simplex,
    symmetric positive-definite covariances) and caches one eigendecomposition
    per component.  When ``variance_floor`` is given, eigenvalues are clamped
    to it and the stored covariances are the floored reconstructions.
    """

    def __init__(self, weights, means, covariances, variance_floor: float = 0.0):
        weights = np.asarray(weights, dtype=np.float64).copy()
        means = np.asarray(means, dtype=np.float64).copy()
        covariances = np.asarray(covariances, dtype=np.float64).copy()
        if weights.ndim != 1:
            raise ValueError("weights must be a 1-D array")
        k = weights.shape[0]
        if means.ndim != 2 or means.shape[0] != k:
            raise ValueError(f"means must have shape ({k}, d), got {means.shape}")
        d = means.shape[1]
        if covariances.shape != (k, d, d):
            raise ValueError(f"covariances must have shape ({k}, {d}, {d}), "
                             f"got {covariances.shape}")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(means))
                and np.all(np.isfinite(covariances))):
            raise ValueError("model parameters contain non-finite values")
        if np.any(weights < 0.0):
            raise ValueError("weights must be nonnegative")
        if abs(float(weights.sum()) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {weights.sum()!r}")

        eigenvalues = np.empty((k, d))
        eigenvectors = np.empty((k, d, d))
        for j in range(k):
            cov = covariances[j]
            asym = np.linalg.norm(cov - cov.T)
            scale = np.linalg.norm(cov)
            if asym > 1e-10 * max(scale, 1e-300):
                raise ValueError(f"component {j} covariance is not symmetric")
            lam, vec = np.linalg.eigh((cov + cov.T) / 2.0)
            if variance_floor > 0.0:
                lam = np.maximum(lam, variance_floor)
                covariances[j] = (vec * lam) @ vec.T
            elif lam[0] <= 0.0:
                raise ValueError(f"component {j} covariance is not positive definite "
                                 f"(min eigenvalue {lam[0]!r})")
            eigenvalues[j] = lam
            eigenvectors[j] = vec

        for arr in (weights, means, covariances, eigenvalues, eigenvectors):
            arr.setflags(write=False)
        self.weights = weights
        self.means = means
        self.covariances = covariances
        self.eigenvalues = eigenvalues
        self.eigenvectors = eigenvectors
        self.variance_floor = float(variance_floor)
        self.fit_history: dict | None = None

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    def __repr__(self):
        return (f"GmmModel(n_components={self.n_components}, dim={self.dim}, "
                f"variance_floor={self.variance_floor})")


def _check_data(model: GmmModel, patches) -> np.ndarray:
    x = np.asarray(patches, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise ValueError(f"expected patches of dimension {model.dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("patches contain non-finite values")
    return x


def log_densities(model: GmmModel, patches, noise_variance: float = 0.0) -> np.ndarray:
    """Per-component Gaussian log-densities N(x; mu_k, Sigma_k + sigma^2 I).

    Returns an (n, K) array.  ``noise_variance`` shifts the cached
    eigenvalues, so no matrix is ever re-factorised.
    """
    x = _check_data(model, patches)
    if noise_variance < 0.0:
        raise ValueError("noise_variance must be nonnegative")
    n, d = x.shape
    out = np.empty((n, model.n_components))
    for k in range(model.n_components):
        lam = model.eigenvalues[k] + noise_variance
        y = (x - model.means[k]) @ model.eigenvectors[k]
        out[:, k] = -0.5 * (d * _LOG_2PI + np.log(lam).sum() + (y * y / lam).sum(axis=1))
    return out


def responsibilities(model: GmmModel, patches, noise_variance: float = 0.0) -> np.ndarray:
    """Posterior component probabilities for each patch, shape (n, K)."""
    logp = log_densities(model, patches, noise_variance) + np.log(model.weights)
    logp -= logsumexp(logp, axis=1, keepdims=True)
    return np.exp(logp)


def noisy_responsibilities(model: GmmModel, noisy_patch, noise_variance: float) -> np.ndarray:
    """Posterior weights beta_k ~ w_k N(z; mu_k, Sigma_k + sigma^2 I), summing to 1."""
    return responsibilities(model, np.asarray(noisy_patch)[None, :], noise_variance)[0]


def log_likelihood(model: GmmModel, patches) -> float:
    """Total mixture log-likelihood of the patches, via log-sum-exp.

    The per-patch terms are accumulated with exact (compensated) summation so
    the value is reproducible to the last bit for monotonicity checks.
    """
    logp = log_densities(model, patches) + np.log(model.weights)
    return math.fsum(logsumexp(logp, axis=1))


def _floored_eigh(cov: np.ndarray, floor: float):
    lam, vec = np.linalg.eigh((cov + cov.T) / 2.0)
    lam = np.maximum(lam, floor)
    return (vec * lam) @ vec.T


def _kmeanspp_init(x: np.ndarray, k: int, floor: float, rng: np.random.Generator):
    """k-means++ style seeding on a subsample; within-cluster covariances."""
    n, d = x.shape
    sample = x[rng.choice(n, size=min(n, _INIT_SUBSAMPLE_MAX), replace=False)]
    m = sample.shape[0]

    centers = np.empty((k, d))
    centers[0] = sample[rng.integers(m)]
    d2 = ((sample - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[j] = sample[rng.integers(m)]
        else:
            centers[j] = sample[rng.choice(m, p=d2 / total)]
        d2 = np.minimum(d2, ((sample - centers[j]) ** 2).sum(axis=1))

    dists = ((sample[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    assign = dists.argmin(axis=1)

    global_cov = np.cov(sample, rowvar=False, bias=True).reshape(d, d)
    weights = np.empty(k)
    means = np.empty((k, d))
    covs = np.empty((k, d, d))
    for j in range(k):
        members = sample[assign == j]
        if members.shape[0] >= 2:
            weights[j] = members.shape[0]
            means[j] = members.mean(axis=0)
            covs[j] = np.cov(members, rowvar=False, bias=True).reshape(d, d)
        else:
            weights[j] = 1.0
            means[j] = centers[j]
            covs[j] = global_cov
        covs[j] = _floored_eigh(covs[j] + floor * np.eye(d), floor)
    weights /= weights.sum()
    return weights, means, covs


def em_fit(patches, n_components: int, config: EmConfig = EmConfig()) -> GmmModel:
    """Fit a K-component full-covariance mixture by EM.

    Requires at least ``n_components * d`` patches.  Deterministic given
    ``config.seed``.  The returned model carries a ``fit_history`` dict with
    the per-iteration training log-likelihood (non-decreasing), the number
    of M-steps performed, and the count of re-seeded components.
    """
    x = np.asarray(patches, dtype=np.float64)
    if x.ndim != 2 or x.size == 0:
        raise ValueError(f"patches must be a non-empty (n, d) array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("patches contain non-finite values")
    k = int(n_components)
    if k < 1:
        raise ValueError("n_components must be >= 1")
    n, d = x.shape
    if n < k * d:
        raise ValueError(f"need at least {k * d} patches to fit {k} components "
                         f"of dimension {d}, got {n}")

    floor = config.variance_floor
    rng = stream_rng(config.seed, "em-init")
    weights, means, covs = _kmeanspp_init(x, k, floor, rng)

    log_w = np.log(weights)
    ll_path: list[float] = []
    n_msteps = 0
    n_reseeds = 0
    prev_ll = None
    for _ in range(config.max_iterations):
        # E-step on the current parameters; also yields their log-likelihood.
        logp = np.empty((n, k))
        for j in range(k):
            lam, vec = np.linalg.eigh((covs[j] + covs[j].T) / 2.0)
            lam = np.maximum(lam, floor)
            y = (x - means[j]) @ vec
            logp[:, j] = log_w[j] - 0.5 * (d * _LOG_2PI + np.log(lam).sum()
                                           + (y * y / lam).sum(axis=1))
        row_lse = logsumexp(logp, axis=1)
        ll = math.fsum(row_lse)
        ll_path.append(ll)
        if prev_ll is not None and abs(ll - prev_ll) <= config.tolerance * abs(prev_ll):
            break
        prev_ll = ll

        resp = np.exp(logp - row_lse[:, None])
        mass = resp.sum(axis=0)

        degenerate = np.flatnonzero(mass < _DEGENERATE_MASS_FRACTION * n)
        healthy = np.flatnonzero(mass >= _DEGENERATE_MASS_FRACTION * n)
        weights = mass / n
        for j in healthy:
            means[j] = resp[:, j] @ x / mass[j]
            xc = x - means[j]
            scatter = (xc * resp[:, j, None]).T @ xc / mass[j]
            covs[j] = _floored_eigh(scatter, floor)
        if degenerate.size:
            worst = np.argsort(row_lse)
            global_cov = _floored_eigh(
                np.cov(x, rowvar=False, bias=True).reshape(d, d), floor)
            for i, j in enumerate(degenerate):
                means[j] = x[worst[i % n]]
                covs[j] = global_cov
                weights[j] = 1.0 / k
                n_reseeds += 1
            weights /= weights.sum()
        log_w = np.log(np.maximum(weights, 1e-300))
        n_msteps += 1

    model = GmmModel(weights, means, covs, variance_floor=floor)
    model.fit_history = {
        "log_likelihood": ll_path,
        "n_msteps": n_msteps,
        "n_reseeds": n_reseeds,
    }
    return model


def save_model(model: GmmModel, path) -> None:
    """Serialise a model to an ``.npz`` archive (lossless float64 arrays).

    Schema: ``version`` (format version), ``dim``, ``n_components``,
    ``weights`` (K,), ``means`` (K, d), ``covariances`` (K, d, d).
    Eigendecompositions are not persisted; they are recomputed on load.
    """
    with open(path, "wb") as fh:
        np.savez(
            fh,
            version=np.array([MODEL_FORMAT_VERSION], dtype=np.int64),
            dim=np.array([model.dim], dtype=np.int64),
            n_components=np.array([model.n_components], dtype=np.int64),
            weights=model.weights,
            means=model.means,
            covariances=model.covariances,
        )


def load_model(path) -> GmmModel:
    """Load a model saved by :func:`save_model`, re-validating all invariants."""
    try:
        with np.load(path) as data:
            fields = {key: data[key] for key in data.files}
    except (zipfile.BadZipFile, OSError, ValueError, EOFError) as exc:
        raise ValueError(f"corrupt or unreadable model file {path}: {exc}") from exc
    required = {"version", "dim", "n_components", "weights", "means", "covariances"}
    missing = required - fields.keys()
    if missing:
        raise ValueError(f"corrupt model file {path}: missing fields {sorted(missing)}")
    version = int(np.asarray(fields["version"]).ravel()[0])
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version} in {path} "
                         f"(expected {MODEL_FORMAT_VERSION})")
    model = GmmModel(fields["weights"], fields["means"], fields["covariances"])
    if model.dim != int(np.asarray(fields["dim"]).ravel()[0]) or \
            model.n_components != int(np.asarray(fields["n_components"]).ravel()[0]):
        raise ValueError(f"corrupt model file {path}: header does not match arrays")
    return model
