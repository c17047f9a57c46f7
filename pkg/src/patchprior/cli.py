"""Command-line entry points for the patch-prior toolbox.

Every run writes a RunManifest next to its primary output: a flat
key-value record of the command, the resolved parameters, the library
version and per-phase wall-clock timings, so results can be traced back
to exactly what produced them.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .adapt import AdaptationConfig, adapt
from .denoise import HqsSchedule, denoise
from .em import EmConfig, em_fit
from .ioutil import atomic_write_bytes
from .model_io import load_model, save_model
from .patches import add_gaussian_noise, extract_patches, psnr
from .pgm import read_pgm, write_pgm
from .sure import SureConfig, estimate_sigma_tilde_sq
from .toy import run_trial

__all__ = ["RunManifest", "cli_dispatch", "main"]

log = logging.getLogger(__name__)

_USAGE_EXIT = 2
_FAILURE_EXIT = 1


class UsageError(ValueError):
    """Inconsistent flag combinations detected after parsing."""


@dataclasses.dataclass(frozen=True)
class RunManifest:
    """Flat, text-serializable record of one tool invocation."""

    command: str
    params: dict
    timings: dict
    version: str = __version__

    def to_text(self) -> str:
        lines = [f"command = {self.command}", f"version = {self.version}"]
        for key in sorted(self.params):
            lines.append(f"{key} = {self.params[key]}")
        for key in sorted(self.timings):
            lines.append(f"time_{key}_seconds = {self.timings[key]:.6f}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        atomic_write_bytes(path, self.to_text().encode("ascii"))


def _manifest_path(command: str, out: Path | None, first_input: Path) -> Path:
    if out is not None:
        return Path(str(out) + ".manifest")
    return first_input.with_name(f"{first_input.name}.{command}.manifest")


def _parse_betas(text: str, sigma: float):
    try:
        multipliers = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"--betas expects a comma list of numbers, got {text!r}") from None
    if not multipliers:
        raise UsageError("--betas list is empty")
    betas = tuple(m / sigma ** 2 for m in multipliers)
    return HqsSchedule(betas=betas, mode_inflations=tuple(1.0 / b for b in betas))


def _corpus_paths(corpus: Path):
    if not corpus.is_dir():
        raise UsageError(f"corpus {corpus} is not a directory")
    paths = sorted(corpus.glob("*.pgm"))
    if not paths:
        raise ValueError(f"no .pgm files in {corpus}")
    return paths


def _cmd_train(args) -> int:
    timings = {}
    start = time.perf_counter()
    paths = _corpus_paths(Path(args.corpus))
    blocks = [extract_patches(read_pgm(p), args.patch_size, args.stride).data
              for p in paths]
    data = np.concatenate(blocks, axis=0)
    timings["extract"] = time.perf_counter() - start
    start = time.perf_counter()
    config = EmConfig(n_components=args.k, max_iters=args.max_iters, tol=args.tol,
                      seed=args.seed)
    model, trace = em_fit(data, config)
    timings["fit"] = time.perf_counter() - start
    out = Path(args.out)
    save_model(model, out)
    log.info("trained %d components on %d patches, %d iterations",
             args.k, data.shape[0], len(trace))
    manifest = RunManifest("train", {
        "corpus": args.corpus, "images": len(paths), "patches": data.shape[0],
        "k": args.k, "patch_size": args.patch_size, "stride": args.stride,
        "seed": args.seed, "max_iters": args.max_iters, "tol": args.tol,
        "iterations_run": len(trace), "out": str(out),
    }, timings)
    manifest.write(_manifest_path("train", out, Path(paths[0])))
    return 0


def _cmd_adapt(args) -> int:
    timings = {}
    generic = load_model(args.model)
    image = read_pgm(args.image)
    if args.sigma_tilde == "sure":
        if args.sigma is None:
            raise UsageError("--sigma-tilde sure requires --sigma")
        schedule = HqsSchedule.default(args.sigma)

        def run(img):
            return denoise(img, args.sigma, generic, schedule).image

        start = time.perf_counter()
        target = run(image)
        timings["prefilter"] = time.perf_counter() - start
        start = time.perf_counter()
        sigma_tilde_sq = estimate_sigma_tilde_sq(
            image, args.sigma, run, SureConfig(seed=args.seed, probes=args.probes))
        timings["sure"] = time.perf_counter() - start
    else:
        try:
            sigma_tilde = float(args.sigma_tilde)
        except ValueError:
            raise UsageError(f"--sigma-tilde expects a number or 'sure', got "
                             f"{args.sigma_tilde!r}") from None
        if sigma_tilde < 0:
            raise UsageError("--sigma-tilde must be nonnegative")
        sigma_tilde_sq = sigma_tilde ** 2
        target = image
    start = time.perf_counter()
    patches = extract_patches(target, int(np.sqrt(generic.dim)), args.stride)
    config = AdaptationConfig(rho=args.rho, sigma_tilde_sq=sigma_tilde_sq,
                              iterations=args.iters)
    adapted, report = adapt(generic, patches, config)
    timings["adapt"] = time.perf_counter() - start
    out = Path(args.out)
    save_model(adapted, out)
    atomic_write_bytes(Path(str(out) + ".report.txt"), report.to_text().encode("ascii"))
    manifest = RunManifest("adapt", {
        "model": args.model, "image": args.image, "out": str(out),
        "rho": args.rho, "sigma_tilde": args.sigma_tilde,
        "sigma_tilde_sq": sigma_tilde_sq, "sigma": args.sigma,
        "iters": args.iters, "stride": args.stride, "seed": args.seed,
        "probes": args.probes,
    }, timings)
    manifest.write(_manifest_path("adapt", out, Path(args.image)))
    return 0


def _cmd_denoise(args) -> int:
    if args.trace and args.ref is None:
        raise UsageError("--trace requires --ref")
    timings = {}
    prior = load_model(args.model)
    noisy = read_pgm(args.input)
    reference = read_pgm(args.ref) if args.ref else None
    schedule = (_parse_betas(args.betas, args.sigma) if args.betas
                else HqsSchedule.default(args.sigma))
    start = time.perf_counter()
    result = denoise(noisy, args.sigma, prior, schedule, reference=reference)
    timings["denoise"] = time.perf_counter() - start
    out = Path(args.out)
    write_pgm(result.image, out)
    if args.trace:
        print("stage,beta,psnr")
        for i, (beta, value) in enumerate(zip(schedule.betas, result.psnr_trace), start=1):
            print(f"{i},{beta:.8g},{value:.4f}")
    manifest = RunManifest("denoise", {
        "input": args.input, "model": args.model, "out": str(out),
        "sigma": args.sigma, "betas": ",".join(f"{b:.8g}" for b in schedule.betas),
        "mode_inflations": ",".join(f"{g:.8g}" for g in schedule.mode_inflations),
        "ref": args.ref, "trace": args.trace,
    }, timings)
    manifest.write(_manifest_path("denoise", out, Path(args.input)))
    return 0


def _cmd_sure(args) -> int:
    timings = {}
    prior = load_model(args.model)
    noisy = read_pgm(args.input)
    schedule = HqsSchedule.default(args.sigma)

    def run(img):
        return denoise(img, args.sigma, prior, schedule).image

    start = time.perf_counter()
    estimate = estimate_sigma_tilde_sq(
        noisy, args.sigma, run,
        SureConfig(delta=args.delta, seed=args.seed, probes=args.probes))
    timings["sure"] = time.perf_counter() - start
    print(f"sigma_tilde_sq {estimate:.6f}")
    print(f"ratio {np.sqrt(estimate) / args.sigma:.6f}")
    manifest = RunManifest("sure", {
        "input": args.input, "model": args.model, "sigma": args.sigma,
        "delta": args.delta, "seed": args.seed, "probes": args.probes,
        "sigma_tilde_sq": f"{estimate:.6f}",
    }, timings)
    manifest.write(_manifest_path("sure", None, Path(args.input)))
    return 0


def _cmd_noise(args) -> int:
    timings = {}
    image = read_pgm(args.input)
    start = time.perf_counter()
    noisy = add_gaussian_noise(image, args.sigma, args.seed)
    timings["noise"] = time.perf_counter() - start
    out = Path(args.out)
    write_pgm(noisy, out)
    manifest = RunManifest("noise", {
        "input": args.input, "out": str(out), "sigma": args.sigma, "seed": args.seed,
    }, timings)
    manifest.write(_manifest_path("noise", out, Path(args.input)))
    return 0


def _cmd_psnr(args) -> int:
    timings = {}
    start = time.perf_counter()
    value = psnr(read_pgm(args.reference), read_pgm(args.test))
    timings["psnr"] = time.perf_counter() - start
    print(f"{value:.4f}")
    manifest = RunManifest("psnr", {
        "reference": args.reference, "test": args.test, "psnr": f"{value:.4f}",
    }, timings)
    manifest.write(_manifest_path("psnr", None, Path(args.reference)))
    return 0


def _cmd_toy(args) -> int:
    timings = {}
    start = time.perf_counter()
    trial = run_trial(args.seed, rho=args.rho)
    timings["trial"] = time.perf_counter() - start
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    points_path = out_dir / "toy_points.csv"
    lines = ["set,x,y"]
    for x, y in trial.generic_points:
        lines.append(f"generic,{x:.6f},{y:.6f}")
    for x, y in trial.target_points:
        lines.append(f"target,{x:.6f},{y:.6f}")
    atomic_write_bytes(points_path, ("\n".join(lines) + "\n").encode("ascii"))
    models_path = out_dir / "toy_models.csv"
    lines = ["model,component,weight,mean_x,mean_y,cov_xx,cov_xy,cov_yy"]
    for name, model in (("generic", trial.generic_model),
                        ("scratch", trial.scratch_model),
                        ("adapted", trial.adapted_model)):
        for k in range(model.n_components):
            mu = model.means[k]
            cov = model.covariances[k]
            lines.append(f"{name},{k},{model.weights[k]:.6f},{mu[0]:.6f},{mu[1]:.6f},"
                         f"{cov[0, 0]:.6f},{cov[0, 1]:.6f},{cov[1, 1]:.6f}")
    atomic_write_bytes(models_path, ("\n".join(lines) + "\n").encode("ascii"))
    print(f"scratch_error {trial.scratch_error:.6f}")
    print(f"adapted_error {trial.adapted_error:.6f}")
    manifest = RunManifest("toy", {
        "seed": args.seed, "rho": args.rho, "out_dir": str(out_dir),
        "points": str(points_path), "models": str(models_path),
    }, timings)
    manifest.write(_manifest_path("toy", points_path, points_path))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="patchprior",
        description="Patch-based denoising with adaptable Gaussian mixture priors.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a generic prior to a corpus of PGM images")
    p.add_argument("corpus", help="directory of .pgm files")
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--k", type=int, default=20, help="number of mixture components")
    p.add_argument("--patch-size", type=int, default=8)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-5)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("adapt", help="adapt a generic prior to one image")
    p.add_argument("model", help="generic model file")
    p.add_argument("image", help="adaptation image; the noisy image when "
                                 "--sigma-tilde is 'sure'")
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--rho", type=float, default=1.0, help="relevance factor")
    p.add_argument("--sigma-tilde", default="0",
                   help="residual noise scale of the adaptation image, or 'sure' "
                        "to pre-filter the image and estimate it")
    p.add_argument("--sigma", type=float, default=None,
                   help="observation noise scale, required with --sigma-tilde sure")
    p.add_argument("--iters", type=int, default=1)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--probes", type=int, default=1)
    p.set_defaults(func=_cmd_adapt)

    p = sub.add_parser("denoise", help="restore a noisy image")
    p.add_argument("input", help="noisy .pgm image")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--betas", default=None,
                   help="comma list of beta multipliers of 1/sigma^2 "
                        "(default 1,4,8,16,32)")
    p.add_argument("--trace", action="store_true",
                   help="print per-stage stage,beta,psnr CSV (needs --ref)")
    p.add_argument("--ref", default=None, help="clean reference image")
    p.set_defaults(func=_cmd_denoise)

    p = sub.add_parser("sure", help="estimate residual noise variance of the "
                                    "built-in denoiser on a noisy image")
    p.add_argument("input")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--probes", type=int, default=1)
    p.set_defaults(func=_cmd_sure)

    p = sub.add_parser("noise", help="add seeded Gaussian noise to an image")
    p.add_argument("input")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_noise)

    p = sub.add_parser("psnr", help="print the PSNR between two images")
    p.add_argument("reference")
    p.add_argument("test")
    p.set_defaults(func=_cmd_psnr)

    p = sub.add_parser("toy", help="run the two-component 2-D adaptation demo")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rho", type=float, default=1.0)
    p.set_defaults(func=_cmd_toy)

    return parser


def cli_dispatch(argv) -> int:
    """Parse argv and run one subcommand.

    Returns 0 on success, 2 on usage errors, 1 on runtime failures.
    """
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exit_:  # argparse prints its own message
        return int(exit_.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return _USAGE_EXIT
    except (OSError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _FAILURE_EXIT


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
