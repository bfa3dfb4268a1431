"""Plug-and-play ADMM driver for linear inverse problems.

Each iteration alternates a data-consistency step, a denoising step, and a
scaled dual update:

    x <- (A^T A + mu I)^{-1} (A^T y + mu (v + d))
    v <- denoise(x - d, sigma_d^2)
    d <- d - (x - v)

The denoising step is the mixture-prior MMSE filter; its noise variance is
either fixed or tied to the penalty as sigma_d^2 = beta / mu.  The mixture
can be refit from the running estimate at scheduled iterations, adapting
the prior to the image being recovered.  The returned estimate is ``v``,
the prior-consistent variable.

No convergence theorem is claimed for an arbitrary plugged denoiser; the
driver tracks the primal residual ||x - v|| so empirical stability is
observable, and aborts with the iteration index if an iterate goes
non-finite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .denoise import DenoiserConfig, denoise_image, extract_patches
from .gmm import EmConfig, GmmModel, em_fit
from .image import as_image, isnr, nmse_db, psnr


@dataclass(frozen=True)
class VarianceRule:
    """How the denoiser noise variance is chosen inside the loop.

    ``fixed(v)`` always denoises at variance v; ``mu_scaled(beta)`` denoises
    at beta / mu, the exact proximal weight for a penalty-mu splitting.
    """

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in ("fixed", "mu_scaled"):
            raise ValueError("kind must be 'fixed' or 'mu_scaled'")
        if self.value < 0.0:
            raise ValueError("variance rule value must be nonnegative")

    @classmethod
    def fixed(cls, value: float) -> "VarianceRule":
        return cls("fixed", float(value))

    @classmethod
    def mu_scaled(cls, beta: float) -> "VarianceRule":
        return cls("mu_scaled", float(beta))

    def resolve(self, mu: float) -> float:
        return self.value if self.kind == "fixed" else self.value / mu


@dataclass
class AdmmParams:
    mu: float
    iterations: int
    denoiser_variance_rule: VarianceRule = field(default_factory=lambda: VarianceRule.mu_scaled(1.0))
    retrain_schedule: tuple[int, ...] = ()
    retrain_em: EmConfig = field(default_factory=EmConfig)
    record_trace: bool = True

    def __post_init__(self):
        if self.mu <= 0.0:
            raise ValueError("mu must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        schedule = tuple(int(s) for s in self.retrain_schedule)
        if any(b <= a for a, b in zip(schedule, schedule[1:])):
            raise ValueError("retrain_schedule must be strictly increasing")
        if schedule and not (1 <= schedule[0] and schedule[-1] < self.iterations):
            raise ValueError("retrain_schedule indices must lie in [1, iterations)")
        self.retrain_schedule = schedule


@dataclass
class AdmmState:
    x: np.ndarray
    v: np.ndarray
    d: np.ndarray
    iteration: int
    trace: list


class AdmmDivergedError(RuntimeError):
    """An iterate went non-finite; carries the offending iteration index."""

    def __init__(self, iteration: int):
        super().__init__(f"ADMM iterate became non-finite at iteration {iteration}")
        self.iteration = iteration


def admm_x_update(op, y, v, d, mu: float) -> np.ndarray:
    """Data-consistency step: (A^T A + mu I)^{-1} (A^T y + mu (v + d))."""
    return op.solve_regularized(op.apply_adjoint(y) + mu * (v + d), mu)


def admm_v_update(denoiser, x, d, variance: float) -> np.ndarray:
    """Prior step: denoise the shifted primal iterate x - d."""
    return denoiser(x - d, variance)


def admm_d_update(d, x, v) -> np.ndarray:
    """Scaled dual update d - (x - v)."""
    return d - (x - v)


def _initial_v(op, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape == op.input_shape:
        return y.copy()
    back = op.apply_adjoint(y)
    lo, hi = float(back.min()), float(back.max())
    if hi == lo:
        return np.zeros(op.input_shape)
    return (back - lo) * (255.0 / (hi - lo))


def _retrain(model: GmmModel, v, cfg: DenoiserConfig, em: EmConfig) -> GmmModel:
    patches = extract_patches(v, cfg).values
    if cfg.dc_handling == "subtract_mean":
        patches = patches - patches.mean(axis=1, keepdims=True)
    return em_fit(patches, model.n_components, em)


def run(op, y, model: GmmModel, params: AdmmParams,
        denoiser_cfg: DenoiserConfig = DenoiserConfig(),
        reference=None, degraded=None, progress=None):
    """Run the plug-and-play loop; returns (estimate, trace, final model).

    ``y`` is the observation: an image for deblurring-style operators, a
    measurement vector otherwise.  ``v`` starts at the observation (image
    case) or at the back-projection A^T y min-max rescaled to [0, 255].
    When ``reference`` (and, for deblurring, ``degraded``) images are given,
    quality metrics are recorded alongside the primal residual in the trace.
    ``progress``, if given, is called as ``progress(iteration, residual)``
    after every iteration.
    """
    v = _initial_v(op, y)
    d = np.zeros_like(v)
    if reference is not None:
        reference = as_image(reference)
    if degraded is not None:
        degraded = as_image(degraded)

    schedule = set(params.retrain_schedule)
    variance = params.denoiser_variance_rule.resolve(params.mu)
    trace: list[dict] = []
    x = v
    for it in range(1, params.iterations + 1):
        x = admm_x_update(op, y, v, d, params.mu)
        v = admm_v_update(
            lambda z, s2: denoise_image(model, z, s2, denoiser_cfg), x, d, variance)
        d = admm_d_update(d, x, v)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v)) and np.all(np.isfinite(d))):
            raise AdmmDivergedError(it)
        residual = float(np.linalg.norm(x - v))
        if params.record_trace:
            row = {"iteration": it, "primal_residual": residual}
            if reference is not None:
                row["psnr"] = psnr(reference, v)
                row["nmse_db"] = nmse_db(reference, v)
                if degraded is not None:
                    row["isnr"] = isnr(reference, degraded, v)
            trace.append(row)
        if progress is not None:
            progress(it, residual)
        if it in schedule:
            model = _retrain(model, v, denoiser_cfg, params.retrain_em)
    return v, trace, model
