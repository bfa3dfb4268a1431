"""Image deblurring and compressive-sensing reconstruction with ADMM and
Gaussian-mixture patch priors.

The pieces compose bottom-up: :mod:`gmmrestore.image` (rasters + metrics),
:mod:`gmmrestore.gmm` (mixture prior, EM), :mod:`gmmrestore.denoise`
(patch MMSE denoiser), :mod:`gmmrestore.operators` (cyclic blur and
compressive measurement), :mod:`gmmrestore.admm` (plug-and-play driver),
:mod:`gmmrestore.bench` (experiment specs and reports), and
:mod:`gmmrestore.cli` (command line).
"""

from .admm import (AdmmDivergedError, AdmmParams, AdmmState, VarianceRule,
                   admm_d_update, admm_v_update, admm_x_update, run)
from .bench import (ExperimentSpec, ExperimentError, KernelCatalogEntry,
                    PrepRules, catalog_hash, degrade, ingest_corpus,
                    kernel_catalog, resize_bilinear, run_experiment,
                    sweep_measurements, train_gmm_from_images,
                    variance_for_bsnr)
from .denoise import (DenoiserConfig, PatchSet, average_patches,
                      denoise_image, extract_patches, mmse_denoise_patch,
                      mmse_denoise_patches)
from .gmm import (EmConfig, GmmModel, em_fit, load_model, log_densities,
                  log_likelihood, noisy_responsibilities, responsibilities,
                  save_model)
from .image import (as_image, bsnr, isnr, load_image, nmse_db, psnr,
                    save_image)
from .operators import (BlurKernel, CompressiveGaussianOperator,
                        CyclicConvolutionOperator, build_compressive,
                        build_cyclic, load_kernel, normalized_kernel,
                        save_kernel)

__version__ = "0.1.0"

__all__ = [
    "AdmmDivergedError", "AdmmParams", "AdmmState", "VarianceRule",
    "admm_d_update", "admm_v_update", "admm_x_update", "run",
    "ExperimentSpec", "ExperimentError", "KernelCatalogEntry", "PrepRules",
    "catalog_hash", "degrade", "ingest_corpus", "kernel_catalog",
    "resize_bilinear", "run_experiment", "sweep_measurements",
    "train_gmm_from_images", "variance_for_bsnr",
    "DenoiserConfig", "PatchSet", "average_patches", "denoise_image",
    "extract_patches", "mmse_denoise_patch", "mmse_denoise_patches",
    "EmConfig", "GmmModel", "em_fit", "load_model", "log_densities",
    "log_likelihood", "noisy_responsibilities", "responsibilities",
    "save_model",
    "as_image", "bsnr", "isnr", "load_image", "nmse_db", "psnr", "save_image",
    "BlurKernel", "CompressiveGaussianOperator", "CyclicConvolutionOperator",
    "build_compressive", "build_cyclic", "load_kernel", "normalized_kernel",
    "save_kernel",
    "__version__",
]
