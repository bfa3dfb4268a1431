"""Command-line front end.

Subcommands::

    train-gmm   fit a patch mixture from a directory of clean images
    degrade     simulate blur + noise or compressive measurement
    deblur      full deblurring experiment (simulate, restore, report)
    csrecon     full compressive-imaging experiment
    denoise     apply the mixture MMSE denoiser to one image
    eval        compute a metric from clean/degraded/restored images
    sweep       csrecon across several measurement counts and seeds

Exit codes: 0 success, 1 usage error, 2 runtime failure.  Diagnostics go to
stderr; results go to files or stdout.  Settings resolve as
defaults < --spec file < explicit flags, and every subcommand accepts
``--print-spec`` to emit its fully resolved spec (seeds materialised)
without running; piping that file back via ``--spec`` reproduces the run.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import sys
from pathlib import Path

import numpy as np

from .admm import AdmmParams, VarianceRule
from .bench import (ExperimentSpec, PrepRules, canonical_json, degrade,
                    ingest_corpus, kernel_catalog, run_experiment,
                    sweep_measurements, train_gmm_from_images,
                    variance_for_bsnr)
from .denoise import DenoiserConfig, denoise_image
from .gmm import EmConfig, load_model, save_model
from .image import isnr, load_image, nmse_db, psnr, save_image
from .operators import build_compressive, build_cyclic
from .seeds import child_seed, fresh_seed

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

DEFAULT_DEBLUR_MU = 0.01
DEFAULT_DEBLUR_BETA = 1.0
DEFAULT_DEBLUR_ITERS = 200
DEFAULT_DEBLUR_RETRAIN = "100"
DEFAULT_CS_MU = 1.0
DEFAULT_CS_BETA = 360.0
DEFAULT_CS_ITERS = 50
DEFAULT_CS_RETRAIN = "25"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse parser that reports usage problems as exit code 1."""

    def error(self, message):
        raise UsageError(message)


def _progress_printer(total: int, quiet: bool):
    if quiet:
        return None

    def report(iteration, residual):
        if iteration % 10 == 0 or iteration == total:
            print(f"iteration {iteration}/{total}  primal residual {residual:.6g}",
                  file=sys.stderr)
    return report


def _parse_retrain(text: str) -> tuple[int, ...]:
    text = text.strip()
    if text in ("", "none"):
        return ()
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError as exc:
        raise UsageError(f"bad --retrain list {text!r}: {exc}") from exc


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError as exc:
        raise UsageError(f"bad size {text!r}, expected WxH") from exc


def _prep_from_flags(crop, crop_anchor, resize) -> PrepRules | None:
    crop_rule = None
    if crop is not None:
        w, h = _parse_size(crop)
        crop_rule = (w, h, crop_anchor or "top_left")
    resize_rule = _parse_size(resize) if resize is not None else None
    if crop_rule is None and resize_rule is None:
        return None
    return PrepRules(crop=crop_rule, resize=resize_rule)


def _materialize_seed(seed) -> int:
    return int(seed) if seed is not None else fresh_seed()


# ---------------------------------------------------------------------------
# Flag sets

def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--quiet", action="store_true", help="suppress progress output")
    p.add_argument("--threads", type=int, default=None,
                   help="cap BLAS/worker threads (best effort)")


def _add_spec_flags(p: argparse.ArgumentParser):
    p.add_argument("--spec", default=None, help="JSON spec file to start from")
    p.add_argument("--print-spec", action="store_true",
                   help="print the fully resolved spec and exit")


def _add_em_flags(p: argparse.ArgumentParser):
    p.add_argument("--patch", type=int, default=None, help="patch side (default 6)")
    p.add_argument("--components", type=int, default=None,
                   help="mixture components (default 20)")
    p.add_argument("--dc", choices=("subtract_mean", "none"), default=None,
                   help="patch mean handling (default subtract_mean)")
    p.add_argument("--em-iters", type=int, default=None,
                   help="EM iteration cap (default 100)")
    p.add_argument("--em-tol", type=float, default=None,
                   help="EM relative log-likelihood tolerance (default 1e-6)")
    p.add_argument("--variance-floor", type=float, default=None,
                   help="covariance eigenvalue floor (default 1e-4)")
    p.add_argument("--corpus-stride", type=int, default=None,
                   help="training patch grid stride (default 2)")
    p.add_argument("--max-patches", type=int, default=None,
                   help="cap on training patches (seeded subsample)")


def _add_experiment_flags(p: argparse.ArgumentParser):
    p.add_argument("--input", default=None, help="clean input image (PNG/PGM)")
    p.add_argument("--corpus", default=None, help="training image directory")
    p.add_argument("--model", default=None, help="pre-trained mixture file")
    p.add_argument("--mu", type=float, default=None, help="ADMM penalty")
    p.add_argument("--iters", type=int, default=None, help="ADMM iterations")
    p.add_argument("--retrain", default=None,
                   help="comma list of iterations after which the mixture is refit "
                        "('none' to disable)")
    p.add_argument("--beta", type=float, default=None,
                   help="denoiser variance = beta/mu (mu-scaled rule)")
    p.add_argument("--denoiser-variance", type=float, default=None,
                   help="fixed denoiser variance (overrides --beta)")
    p.add_argument("--patch-stride", type=int, default=None,
                   help="denoiser patch grid stride (default 1)")
    p.add_argument("--seed", type=int, default=None,
                   help="base seed; noise/matrix/EM streams derive from it")
    p.add_argument("--crop", default=None, help="crop input to WxH before use")
    p.add_argument("--crop-anchor", choices=("top_left", "center"), default=None)
    p.add_argument("--resize", default=None, help="resize input to WxH after crop")
    p.add_argument("--corpus-crop", default=None, help="crop corpus images to WxH")
    p.add_argument("--corpus-resize", default=None, help="resize corpus images to WxH")
    p.add_argument("--out-dir", default=None, help="output directory (default ./out)")
    _add_em_flags(p)
    _add_spec_flags(p)
    _add_common(p)


def build_parser() -> _Parser:
    parser = _Parser(prog="gmmrestore",
                     description="Image deblurring and compressive-sensing "
                                 "reconstruction with mixture patch priors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-gmm", help="fit a patch mixture from clean images")
    p.add_argument("--corpus", default=None, help="directory of clean images")
    p.add_argument("--out", default=None, help="output model file (.gmm/.npz)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--crop", default=None, help="crop corpus images to WxH")
    p.add_argument("--crop-anchor", choices=("top_left", "center"), default=None)
    p.add_argument("--resize", default=None, help="resize corpus images to WxH")
    _add_em_flags(p)
    _add_spec_flags(p)
    _add_common(p)

    p = sub.add_parser("degrade", help="simulate the observation of a clean image")
    p.add_argument("--input", default=None)
    p.add_argument("--out", default=None,
                   help=".png/.pgm for deblurring, .npy for measurements")
    p.add_argument("--kernel-id", type=int, default=None, help="catalog kernel 1..6")
    p.add_argument("--measurements", type=int, default=None)
    p.add_argument("--matrix-seed", type=int, default=None)
    p.add_argument("--noise-variance", type=float, default=None)
    p.add_argument("--bsnr", type=float, default=None, help="target BSNR in dB (deblur)")
    p.add_argument("--mu", type=float, default=None,
                   help="penalty registered with the compressive operator")
    p.add_argument("--seed", type=int, default=None)
    _add_spec_flags(p)
    _add_common(p)

    p = sub.add_parser("deblur", help="full deblurring experiment")
    p.add_argument("--kernel-id", type=int, default=None, help="catalog kernel 1..6")
    p.add_argument("--noise-variance", type=float, default=None)
    p.add_argument("--bsnr", type=float, default=None, help="target BSNR in dB")
    _add_experiment_flags(p)

    p = sub.add_parser("csrecon", help="full compressive-imaging experiment")
    p.add_argument("--measurements", type=int, default=None)
    p.add_argument("--matrix-seed", type=int, default=None)
    p.add_argument("--noise-variance", type=float, default=None)
    _add_experiment_flags(p)

    p = sub.add_parser("denoise", help="apply the mixture MMSE denoiser")
    p.add_argument("--input", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--noise-variance", type=float, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--patch-stride", type=int, default=None)
    p.add_argument("--dc", choices=("subtract_mean", "none"), default=None)
    p.add_argument("--clean", default=None, help="optional reference for PSNR echo")
    _add_spec_flags(p)
    _add_common(p)

    p = sub.add_parser("eval", help="compute a metric between images")
    p.add_argument("--clean", default=None)
    p.add_argument("--degraded", default=None)
    p.add_argument("--restored", default=None)
    p.add_argument("--metric", choices=("isnr", "psnr", "nmse"), default=None)
    _add_spec_flags(p)
    _add_common(p)

    p = sub.add_parser("sweep", help="csrecon across measurement counts")
    p.add_argument("--measurements", default=None,
                   help="comma list of measurement counts")
    p.add_argument("--seeds", type=int, default=None,
                   help="matrix seeds per count (default 1)")
    p.add_argument("--matrix-seed", type=int, default=None)
    p.add_argument("--noise-variance", type=float, default=None)
    _add_experiment_flags(p)

    return parser


# ---------------------------------------------------------------------------
# Flag resolution

def _flff(flags: dict, args, name: str, default):
    """Resolve one setting: default < spec-file flags < explicit flag."""
    explicit = getattr(args, name.replace("-", "_"), None)
    if explicit is not None:
        return explicit
    if name in flags and flags[name] is not None:
        return flags[name]
    return default


def _load_flag_spec(args, subcommand: str) -> dict:
    if getattr(args, "spec", None) is None:
        return {}
    data = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    if data.get("subcommand") != subcommand:
        raise UsageError(f"spec file is for subcommand {data.get('subcommand')!r}, "
                         f"not {subcommand!r}")
    return dict(data.get("flags", {}))


def _emit_flag_spec(subcommand: str, flags: dict) -> int:
    print(canonical_json({"subcommand": subcommand, "flags": flags}), end="")
    return EXIT_OK


def _resolve_experiment_spec(kind: str, args) -> ExperimentSpec:
    """Build the ExperimentSpec from defaults, an optional --spec file, and
    explicit flags (in that priority order)."""
    base = None
    if getattr(args, "spec", None) is not None:
        base = ExperimentSpec.from_json(Path(args.spec).read_text(encoding="utf-8"))
        if base.kind != kind:
            raise UsageError(f"spec file is a {base.kind!r} spec, expected {kind!r}")
    d = base.to_dict() if base is not None else None

    def pick(flag, spec_path, default):
        explicit = getattr(args, flag, None)
        if explicit is not None:
            return explicit
        if d is not None:
            node = d
            for key in spec_path[:-1]:
                node = node[key]
            value = node[spec_path[-1]]
            if value is not None:
                return value
        return default

    seed = getattr(args, "seed", None)
    if seed is not None or d is None:
        seed = _materialize_seed(seed)
        noise_seed = child_seed(seed, "noise")
        matrix_seed = child_seed(seed, "matrix")
        em_seed = child_seed(seed, "em-init")
    else:
        noise_seed = d["noise_seed"]
        matrix_seed = d.get("matrix_seed")
        em_seed = d["em"]["seed"]
    matrix_seed = pick("matrix_seed", ("matrix_seed",), matrix_seed)

    if kind == "deblur":
        mu_default, beta_default = DEFAULT_DEBLUR_MU, DEFAULT_DEBLUR_BETA
        iters_default, retrain_default = DEFAULT_DEBLUR_ITERS, DEFAULT_DEBLUR_RETRAIN
    else:
        mu_default, beta_default = DEFAULT_CS_MU, DEFAULT_CS_BETA
        iters_default, retrain_default = DEFAULT_CS_ITERS, DEFAULT_CS_RETRAIN

    mu = float(pick("mu", ("admm", "mu"), mu_default))
    iterations = int(pick("iters", ("admm", "iterations"), iters_default))
    if getattr(args, "denoiser_variance", None) is not None:
        rule = VarianceRule.fixed(args.denoiser_variance)
    elif getattr(args, "beta", None) is not None:
        rule = VarianceRule.mu_scaled(args.beta)
    elif d is not None:
        rd = d["admm"]["denoiser_variance_rule"]
        rule = VarianceRule(rd["kind"], rd["value"])
    else:
        rule = VarianceRule.mu_scaled(beta_default)
    if getattr(args, "retrain", None) is not None:
        schedule = _parse_retrain(args.retrain)
    elif d is not None:
        schedule = tuple(d["admm"]["retrain_schedule"])
    else:
        schedule = _parse_retrain(retrain_default)

    em = EmConfig(
        max_iterations=int(pick("em_iters", ("em", "max_iterations"), 100)),
        tolerance=float(pick("em_tol", ("em", "tolerance"), 1e-6)),
        variance_floor=float(pick("variance_floor", ("em", "variance_floor"), 1e-4)),
        seed=int(pick("_no_flag", ("em", "seed"), em_seed)),
    )
    denoiser = DenoiserConfig(
        patch_side=int(pick("patch", ("denoiser", "patch_side"), 6)),
        stride=int(pick("patch_stride", ("denoiser", "stride"), 1)),
        dc_handling=pick("dc", ("denoiser", "dc_handling"), "subtract_mean"),
    )

    corpus = getattr(args, "corpus", None)
    model = getattr(args, "model", None)
    if corpus is not None and model is not None:
        raise UsageError("--corpus and --model are mutually exclusive")
    if corpus is None and model is None and d is not None:
        corpus, model = d["training_corpus"], d["model_path"]
    if corpus is None and model is None:
        raise UsageError("one of --corpus or --model is required")

    noise_variance = getattr(args, "noise_variance", None)
    target_bsnr = getattr(args, "bsnr", None)
    if noise_variance is not None and target_bsnr is not None:
        raise UsageError("--noise-variance and --bsnr are mutually exclusive")
    if noise_variance is None and target_bsnr is None:
        if d is not None:
            noise_variance = d["noise_variance"]
            target_bsnr = d["target_bsnr"]
        elif kind == "compressive":
            noise_variance = 0.0
        else:
            raise UsageError("one of --noise-variance or --bsnr is required")

    image_prep = _prep_from_flags(getattr(args, "crop", None),
                                  getattr(args, "crop_anchor", None),
                                  getattr(args, "resize", None))
    corpus_prep = _prep_from_flags(getattr(args, "corpus_crop", None),
                                   getattr(args, "crop_anchor", None),
                                   getattr(args, "corpus_resize", None))
    if d is not None:
        if image_prep is None and d["image_prep"] is not None:
            image_prep = _prep_from_dict(d["image_prep"])
        if corpus_prep is None and d["corpus_prep"] is not None:
            corpus_prep = _prep_from_dict(d["corpus_prep"])

    image_path = pick("input", ("image_path",), None)
    if image_path is None:
        raise UsageError("--input is required")

    kwargs = dict(
        kind=kind,
        image_path=str(image_path),
        output_dir=str(pick("out_dir", ("output_dir",), "out")),
        admm=AdmmParams(mu=mu, iterations=iterations, denoiser_variance_rule=rule,
                        retrain_schedule=schedule, retrain_em=em),
        denoiser=denoiser,
        em=em,
        n_components=int(pick("components", ("n_components",), 20)),
        training_corpus=str(corpus) if corpus is not None else None,
        model_path=str(model) if model is not None else None,
        corpus_stride=int(pick("corpus_stride", ("corpus_stride",), 2)),
        corpus_max_patches=pick("max_patches", ("corpus_max_patches",), None),
        noise_variance=None if noise_variance is None else float(noise_variance),
        target_bsnr=None if target_bsnr is None else float(target_bsnr),
        noise_seed=int(pick("_no_flag", ("noise_seed",), noise_seed)),
        image_prep=image_prep,
        corpus_prep=corpus_prep,
    )
    if kind == "deblur":
        kernel_id = pick("kernel_id", ("kernel_id",), None)
        if kernel_id is None:
            raise UsageError("--kernel-id is required for deblurring")
        kwargs["kernel_id"] = int(kernel_id)
    else:
        measurements = pick("measurements", ("measurements",), None)
        if measurements is None:
            raise UsageError("--measurements is required")
        kwargs["measurements"] = int(measurements)
        kwargs["matrix_seed"] = int(matrix_seed)
    try:
        return ExperimentSpec(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _prep_from_dict(entry) -> PrepRules | None:
    crop = tuple(entry["crop"]) if entry.get("crop") else None
    resize = tuple(entry["resize"]) if entry.get("resize") else None
    if crop is None and resize is None:
        return None
    return PrepRules(crop=crop, resize=resize)


# ---------------------------------------------------------------------------
# Subcommands

def _cmd_train_gmm(args) -> int:
    flags = _load_flag_spec(args, "train-gmm")
    resolved = {
        "corpus": _flff(flags, args, "corpus", None),
        "out": _flff(flags, args, "out", None),
        "patch": int(_flff(flags, args, "patch", 6)),
        "components": int(_flff(flags, args, "components", 20)),
        "dc": _flff(flags, args, "dc", "subtract_mean"),
        "em-iters": int(_flff(flags, args, "em-iters", 100)),
        "em-tol": float(_flff(flags, args, "em-tol", 1e-6)),
        "variance-floor": float(_flff(flags, args, "variance-floor", 1e-4)),
        "corpus-stride": int(_flff(flags, args, "corpus-stride", 2)),
        "max-patches": _flff(flags, args, "max-patches", None),
        "seed": _materialize_seed(_flff(flags, args, "seed", None)),
        "crop": _flff(flags, args, "crop", None),
        "crop-anchor": _flff(flags, args, "crop-anchor", "top_left"),
        "resize": _flff(flags, args, "resize", None),
    }
    if args.print_spec:
        return _emit_flag_spec("train-gmm", resolved)
    if resolved["corpus"] is None or resolved["out"] is None:
        raise UsageError("--corpus and --out are required")
    prep = _prep_from_flags(resolved["crop"], resolved["crop-anchor"],
                            resolved["resize"])
    images = ingest_corpus(resolved["corpus"], prep)
    em = EmConfig(max_iterations=resolved["em-iters"], tolerance=resolved["em-tol"],
                  variance_floor=resolved["variance-floor"], seed=resolved["seed"])
    cfg = DenoiserConfig(patch_side=resolved["patch"], dc_handling=resolved["dc"])
    model = train_gmm_from_images(images, resolved["components"], em,
                                  denoiser_cfg=cfg,
                                  stride=resolved["corpus-stride"],
                                  max_patches=resolved["max-patches"])
    save_model(model, resolved["out"])
    history = model.fit_history["log_likelihood"]
    print(f"final log-likelihood: {history[-1]!r} "
          f"({model.fit_history['n_msteps']} M-steps)")
    print(f"model written to {resolved['out']}")
    return EXIT_OK


def _cmd_degrade(args) -> int:
    flags = _load_flag_spec(args, "degrade")
    resolved = {
        "input": _flff(flags, args, "input", None),
        "out": _flff(flags, args, "out", None),
        "kernel-id": _flff(flags, args, "kernel-id", None),
        "measurements": _flff(flags, args, "measurements", None),
        "matrix-seed": _flff(flags, args, "matrix-seed", None),
        "noise-variance": _flff(flags, args, "noise-variance", None),
        "bsnr": _flff(flags, args, "bsnr", None),
        "mu": float(_flff(flags, args, "mu", 1.0)),
        "seed": _materialize_seed(_flff(flags, args, "seed", None)),
    }
    if resolved["kernel-id"] is not None and resolved["measurements"] is not None:
        raise UsageError("--kernel-id and --measurements are mutually exclusive")
    if resolved["kernel-id"] is None and resolved["measurements"] is None:
        raise UsageError("one of --kernel-id or --measurements is required")
    if resolved["matrix-seed"] is None:
        resolved["matrix-seed"] = child_seed(resolved["seed"], "matrix")
    if args.print_spec:
        return _emit_flag_spec("degrade", resolved)
    if resolved["input"] is None or resolved["out"] is None:
        raise UsageError("--input and --out are required")

    img = load_image(resolved["input"])
    noise_seed = child_seed(resolved["seed"], "noise")
    if resolved["kernel-id"] is not None:
        entry = kernel_catalog().get(int(resolved["kernel-id"]))
        if entry is None:
            raise UsageError(f"kernel-id must be 1..6, got {resolved['kernel-id']}")
        op = build_cyclic(entry.kernel, img.shape)
        if resolved["bsnr"] is not None:
            variance = variance_for_bsnr(op.apply(img), float(resolved["bsnr"]))
        elif resolved["noise-variance"] is not None:
            variance = float(resolved["noise-variance"])
        elif entry.noise_variance is not None:
            variance = entry.noise_variance
        else:
            variance = variance_for_bsnr(op.apply(img), entry.target_bsnr)
        y = degrade(img, op, variance, noise_seed)
        save_image(y, resolved["out"])
    else:
        variance = float(resolved["noise-variance"] or 0.0)
        op = build_compressive(img.shape, int(resolved["measurements"]),
                               resolved["mu"], int(resolved["matrix-seed"]))
        y = degrade(img, op, variance, noise_seed)
        np.save(resolved["out"], y)
    print(f"noise variance: {variance!r}")
    print(f"degraded observation written to {resolved['out']}")
    return EXIT_OK


def _run_spec_command(kind: str, args) -> int:
    spec = _resolve_experiment_spec(kind, args)
    if args.print_spec:
        print(spec.to_json(), end="")
        return EXIT_OK
    report = run_experiment(
        spec, progress=_progress_printer(spec.admm.iterations, args.quiet))
    for key, value in sorted(report["metrics"].items()):
        print(f"{key}: {value!r}")
    print(f"report written to {Path(spec.output_dir) / 'report.json'}")
    return EXIT_OK


def _cmd_denoise(args) -> int:
    flags = _load_flag_spec(args, "denoise")
    resolved = {
        "input": _flff(flags, args, "input", None),
        "model": _flff(flags, args, "model", None),
        "noise-variance": _flff(flags, args, "noise-variance", None),
        "out": _flff(flags, args, "out", None),
        "patch-stride": int(_flff(flags, args, "patch-stride", 1)),
        "dc": _flff(flags, args, "dc", "subtract_mean"),
        "clean": _flff(flags, args, "clean", None),
    }
    if args.print_spec:
        return _emit_flag_spec("denoise", resolved)
    missing = [k for k in ("input", "model", "noise-variance", "out")
               if resolved[k] is None]
    if missing:
        raise UsageError("missing required flags: " + ", ".join("--" + m for m in missing))
    model = load_model(resolved["model"])
    img = load_image(resolved["input"])
    side = int(round(model.dim ** 0.5))
    cfg = DenoiserConfig(patch_side=side, stride=resolved["patch-stride"],
                         dc_handling=resolved["dc"])
    out = denoise_image(model, img, float(resolved["noise-variance"]), cfg)
    save_image(out, resolved["out"])
    if resolved["clean"] is not None:
        print(f"psnr: {psnr(load_image(resolved['clean']), out)!r}")
    print(f"denoised image written to {resolved['out']}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    flags = _load_flag_spec(args, "eval")
    resolved = {
        "clean": _flff(flags, args, "clean", None),
        "degraded": _flff(flags, args, "degraded", None),
        "restored": _flff(flags, args, "restored", None),
        "metric": _flff(flags, args, "metric", None),
    }
    if args.print_spec:
        return _emit_flag_spec("eval", resolved)
    if resolved["metric"] is None:
        raise UsageError("--metric is required")
    metric = resolved["metric"]
    needed = {"isnr": ("clean", "degraded", "restored"),
              "psnr": ("clean", "restored"),
              "nmse": ("clean", "restored")}[metric]
    missing = [k for k in needed if resolved[k] is None]
    if missing:
        raise UsageError("missing required flags: " + ", ".join("--" + m for m in missing))
    clean = load_image(resolved["clean"])
    restored = load_image(resolved["restored"])
    if metric == "isnr":
        value = isnr(clean, load_image(resolved["degraded"]), restored)
    elif metric == "psnr":
        value = psnr(clean, restored)
    else:
        value = nmse_db(clean, restored)
    print(repr(value))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    spec = _resolve_experiment_spec("compressive", args)
    if args.measurements is None:
        raise UsageError("--measurements is required for sweep")
    try:
        m_values = [int(t) for t in str(args.measurements).split(",")]
    except ValueError as exc:
        raise UsageError(f"bad --measurements list: {exc}") from exc
    n_seeds = args.seeds if args.seeds is not None else 1
    if args.print_spec:
        print(canonical_json({"base_spec": spec.to_dict(),
                              "m_values": m_values, "n_seeds": n_seeds}), end="")
        return EXIT_OK
    result = sweep_measurements(spec, m_values, n_seeds=n_seeds,
                                progress=_progress_printer(spec.admm.iterations,
                                                           args.quiet))
    for row in result["averages"]:
        print(f"M={row['measurements']}: mean NMSE "
              f"{row['mean_nmse_db']:.2f} dB over {n_seeds} seed(s)")
    print(f"table written to {Path(spec.output_dir) / 'sweep.csv'}")
    return EXIT_OK


_COMMANDS = {
    "train-gmm": _cmd_train_gmm,
    "degrade": _cmd_degrade,
    "deblur": lambda args: _run_spec_command("deblur", args),
    "csrecon": lambda args: _run_spec_command("compressive", args),
    "denoise": _cmd_denoise,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
}


def _thread_limit(n):
    if n is None:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=max(1, int(n)))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        with _thread_limit(getattr(args, "threads", None)):
            return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
