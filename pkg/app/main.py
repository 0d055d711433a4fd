"""
Command-line entry point: phantoms, dictionary learning, fits, denoising,
projections, FBP, reconstructions, DPC splitting, metrics and config-driven runs
"""
import argparse
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from .core.config import get_settings
from .core.dependencies import (
    get_dictionary_repository,
    get_image_repository,
    get_metrics_repository,
    get_report_repository,
    get_sinogram_repository,
)
from .core.errors import ConfigurationError, PatchRecError, ShapeMismatchError
from .models import Image
from .schemas import Geometry, SolverConfig
from .services.dictionary import KSVDTrainer
from .services.experiments import run_experiment, synthesize
from .services.metrics import psnr, q_factor, ssim
from .services.patchgrid import sample_patches
from .services.phantoms import sobel_gradients
from .services.solver import denoise, reconstruct
from .services.tomography import fbp, project, split_dpc


class _Parser(argparse.ArgumentParser):
    """Usage errors as one machine-parsable line, exit status 2"""

    def error(self, message: str):
        text = message.replace('"', "'")
        self.exit(2, f'error code=usage message="{text}"\n')


def _common_options() -> argparse.ArgumentParser:
    settings = get_settings()
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=settings.SEED)
    common.add_argument("--beta", type=float, default=None, help=f"L1 weight (default {settings.BETA})")
    common.add_argument("--rho", type=float, default=None, help=f"overlap weight (default {settings.RHO})")
    common.add_argument("--iters", type=int, default=None, help="solver iterations, or K-SVD iterations for learn")
    common.add_argument("--step", type=int, default=settings.STEP)
    common.add_argument("--patch-size", type=int, default=settings.PATCH_SIZE)
    common.add_argument("--atoms", type=int, default=settings.N_ATOMS)
    common.add_argument("--max-atoms", type=int, default=settings.MAX_ATOMS)
    common.add_argument("--accelerate", action=argparse.BooleanOptionalAction, default=None,
                        help="FISTA (default) or plain ISTA with --no-accelerate")
    common.add_argument("--restart", action=argparse.BooleanOptionalAction, default=None,
                        help="adaptive restart of the FISTA momentum")
    common.add_argument("--continuation", type=int, default=None, help="beta-continuation stages before the target beta")
    common.add_argument("--output-dir", default=settings.OUTPUT_DIR)
    common.add_argument("-v", "--verbose", action="store_true", default=settings.VERBOSE)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = _Parser(prog="patchrec", description="Convex patch-dictionary denoising and tomography")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("phantom", parents=[common], help="synthesize a test image")
    p.add_argument("--kind", choices=["shepp-logan", "random", "texture", "disk"], default="shepp-logan")
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--out", default="phantom.pif", help=".pif or .pgm")

    p = sub.add_parser("learn", parents=[common], help="train a K-SVD dictionary")
    p.add_argument("--input", required=True, help="training image")
    p.add_argument("--n-patches", type=int, default=get_settings().N_TRAINING_PATCHES)
    p.add_argument("--vectorial", action="store_true", help="train on the Sobel gradient field")
    p.add_argument("--out", default="dictionary.pdc")

    for name, text in (("fit", "noiseless sparse fit of an image"), ("denoise", "denoise an image")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--input", required=True)
        p.add_argument("--dictionary", required=True)
        p.add_argument("--init", choices=["zero", "warm"], default=None)
        p.add_argument("--out", default=f"{name}.pif")

    p = sub.add_parser("project", parents=[common], help="parallel-beam sinogram of an image")
    p.add_argument("--input", required=True)
    p.add_argument("--angles", type=int, default=60)
    p.add_argument("--detectors", type=int, default=None)
    p.add_argument("--spacing", type=float, default=1.0)
    p.add_argument("--out", default="sinogram.psn")

    p = sub.add_parser("fbp", parents=[common], help="filtered back-projection")
    p.add_argument("--input", required=True)
    p.add_argument("--size", type=int, default=None, help="image side (default from the detector count)")
    p.add_argument("--filter", choices=["ramlak", "hann"], default="ramlak")
    p.add_argument("--out", default="fbp.pif")

    p = sub.add_parser("reconstruct", parents=[common], help="patch-based tomographic reconstruction")
    p.add_argument("--input", required=True)
    p.add_argument("--dictionary", required=True)
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--init", choices=["zero", "warm", "fbp"], default=None)
    p.add_argument("--out", default="reconstruction.pif")

    p = sub.add_parser("dpc-split", parents=[common], help="split a DPC sinogram into X/Y sinograms")
    p.add_argument("--input", required=True)
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--out-x", default="sinogram_x.psn")
    p.add_argument("--out-y", default="sinogram_y.psn")

    p = sub.add_parser("metrics", parents=[common], help="SSIM, PSNR and Q of image files")
    p.add_argument("--truth", required=True)
    p.add_argument("--restored", required=True)
    p.add_argument("--degraded", default=None)

    p = sub.add_parser("run", parents=[common], help="run an experiment file")
    p.add_argument("config")
    return parser


def _out(args, name: str) -> Path:
    path = Path(name)
    return path if path.is_absolute() else Path(args.output_dir) / path


def _solver_config(args) -> SolverConfig:
    return SolverConfig.from_settings(
        get_settings(),
        beta=args.beta,
        rho=args.rho,
        max_iters=args.iters,
        accelerate=args.accelerate,
        restart=args.restart,
        continuation=args.continuation,
        init=getattr(args, "init", None),
        warm_max_atoms=args.max_atoms,
        seed=args.seed,
    )


def _emit(lines: dict) -> None:
    sys.stdout.write(get_metrics_repository().format(lines))


def cmd_phantom(args) -> None:
    img = synthesize(args.kind, args.size, args.seed)
    out = _out(args, args.out)
    if out.suffix.lower() == ".pgm":
        get_image_repository().write_pgm(img, out, bits=16)
    else:
        get_image_repository().write(img, out)
    _emit({"written": out})


def cmd_learn(args) -> None:
    img = get_image_repository().read(args.input)
    if args.vectorial:
        img = sobel_gradients(img)
    patches = sample_patches(img, args.patch_size, args.n_patches, args.seed)
    trainer = KSVDTrainer(
        n_atoms=args.atoms,
        max_atoms=args.max_atoms,
        iters=get_settings().KSVD_ITERS if args.iters is None else args.iters,
        seed=args.seed,
        channels=img.channels,
        verbose=args.verbose,
    ).fit(patches)
    out = get_dictionary_repository().write(trainer.dictionary_, _out(args, args.out))
    _emit({"written": out, "initial_error": trainer.initial_error_, "error": trainer.error_history_[-1]})


def _load_dictionary(args, img: Image):
    dictionary = get_dictionary_repository().read(args.dictionary)
    if dictionary.channels != img.channels:
        raise ShapeMismatchError(f"dictionary has {dictionary.channels} channels, image has {img.channels}")
    return dictionary


def cmd_denoise(args) -> None:
    img = get_image_repository().read(args.input)
    dictionary = _load_dictionary(args, img)
    restored, report = denoise(img, dictionary, args.step, _solver_config(args), verbose=args.verbose)
    out = get_image_repository().write(restored, _out(args, args.out))
    get_report_repository().write(report, out.with_suffix(".csv"))
    _emit({
        "written": out,
        "iterations": report.iterations,
        "objective": report.final_objective,
        "sparsity": report.final_sparsity,
        "ssim_input": ssim(img, restored),
    })


def cmd_project(args) -> None:
    img = get_image_repository().read(args.input)
    if img.width != img.height:
        raise ShapeMismatchError(f"projection needs a square image, got {img.width}x{img.height}")
    geometry = Geometry.parallel(img.width, args.angles, args.detectors, args.spacing)
    out = get_sinogram_repository().write(project(img, geometry), _out(args, args.out))
    _emit({"written": out, "angles": geometry.n_angles, "detectors": geometry.n_detectors})


def cmd_fbp(args) -> None:
    sino = get_sinogram_repository().read(args.input, image_size=args.size)
    out = get_image_repository().write(fbp(sino, sino.geometry, args.filter), _out(args, args.out))
    _emit({"written": out})


def cmd_reconstruct(args) -> None:
    sino = get_sinogram_repository().read(args.input, image_size=args.size)
    dictionary = get_dictionary_repository().read(args.dictionary)
    if dictionary.channels != sino.channels:
        raise ShapeMismatchError(f"dictionary has {dictionary.channels} channels, sinogram has {sino.channels}")
    restored, report = reconstruct(sino, dictionary, args.step, _solver_config(args), verbose=args.verbose)
    out = get_image_repository().write(restored, _out(args, args.out))
    get_report_repository().write(report, out.with_suffix(".csv"))
    _emit({
        "written": out,
        "iterations": report.iterations,
        "objective": report.final_objective,
        "sparsity": report.final_sparsity,
    })


def cmd_dpc_split(args) -> None:
    sino = get_sinogram_repository().read(args.input, image_size=args.size)
    sx, sy = split_dpc(sino)
    repo = get_sinogram_repository()
    _emit({"written_x": repo.write(sx, _out(args, args.out_x)), "written_y": repo.write(sy, _out(args, args.out_y))})


def cmd_metrics(args) -> None:
    images = get_image_repository()
    truth = images.read(args.truth)
    restored = images.read(args.restored)
    lines = {"ssim": ssim(restored, truth), "psnr": psnr(restored, truth)}
    if args.degraded is not None:
        q = q_factor(truth, images.read(args.degraded), restored)
        lines.update(q=q.value, q_capped=q.capped)
    _emit(lines)


def cmd_run(args) -> None:
    _emit(run_experiment(args.config, verbose=args.verbose))


COMMANDS = {
    "phantom": cmd_phantom,
    "learn": cmd_learn,
    "fit": cmd_denoise,
    "denoise": cmd_denoise,
    "project": cmd_project,
    "fbp": cmd_fbp,
    "reconstruct": cmd_reconstruct,
    "dpc-split": cmd_dpc_split,
    "metrics": cmd_metrics,
    "run": cmd_run,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except PatchRecError as exc:
        print(exc.one_line(), file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(ConfigurationError(str(exc.errors()[0]["msg"])).one_line(), file=sys.stderr)
        return 1
    except OSError as exc:
        text = str(exc).replace('"', "'")
        print(f'error code=io message="{text}"', file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
