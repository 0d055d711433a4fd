"""
Experiment orchestration: config files, the fit / denoise / reconstruct / dpc
pipelines and (beta, rho) grid searches
"""
import configparser
import itertools
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type

import numpy as np
import pandas as pd
from pydantic import ValidationError

from .base import IPipeline
from .dictionary import KSVDTrainer
from .metrics import psnr, q_from_scores, ssim
from .patchgrid import build_grid, sample_patches
from .phantoms import (
    add_image_noise,
    disk_spec,
    gen_phantom,
    normalize,
    random_phantom_spec,
    shepp_logan_spec,
    sobel_gradients,
    texture_image,
)
from .solver import denoise, reconstruct
from .tomography import add_noise, combine_dpc, fbp, project, split_dpc, stack_channels
from ..core.config import get_settings
from ..core.dependencies import (
    get_dictionary_repository,
    get_image_repository,
    get_metrics_repository,
    get_report_repository,
    get_sinogram_repository,
)
from ..core.errors import ConfigurationError, ShapeMismatchError
from ..models import Dictionary, Image, Sinogram
from ..schemas import (
    DictionarySection,
    ExperimentConfig,
    Geometry,
    GeometrySection,
    PipelineSection,
    SolveReport,
    SolverConfig,
    SsimParams,
)

_SECTIONS = {
    "pipeline": PipelineSection,
    "solver": SolverConfig,
    "geometry": GeometrySection,
    "dictionary": DictionarySection,
}


def load_experiment_config(path) -> ExperimentConfig:
    """Parse an INI experiment file into a validated ``ExperimentConfig``"""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"{path}: experiment file not found")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc

    unknown = set(parser.sections()) - set(_SECTIONS)
    if unknown:
        raise ConfigurationError(f"{path}: unknown sections {sorted(unknown)}")
    if not parser.has_section("pipeline"):
        raise ConfigurationError(f"{path}: missing [pipeline] section")

    values: Dict[str, Dict[str, str]] = {}
    for name in parser.sections():
        section = dict(parser.items(name))
        stray = set(section) - set(_SECTIONS[name].model_fields)
        if stray:
            raise ConfigurationError(f"{path}: unknown keys in [{name}]: {sorted(stray)}")
        values[name] = section
    try:
        return ExperimentConfig.model_validate(values)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "config"
        raise ConfigurationError(f"{path}: {where}: {first['msg']}") from exc


def synthesize(kind: str, size: int, seed: int) -> Image:
    """Ground-truth image for a [pipeline] phantom kind"""
    if kind == "shepp-logan":
        return gen_phantom(shepp_logan_spec(size))
    if kind == "random":
        return gen_phantom(random_phantom_spec(size, 10, seed))
    if kind == "texture":
        return texture_image(size, seed)
    if kind == "disk":
        return gen_phantom(disk_spec(size))
    raise ConfigurationError(f"unknown phantom kind '{kind}'")


class ExperimentPipeline(IPipeline):
    """Shared data preparation, dictionary handling, scoring and artifact output.

    Subclasses define how the reference is degraded (``measure``) and how
    the measured data is restored (``restore``).
    """

    kind = "abstract"
    channels = 1

    def __init__(self, config: ExperimentConfig, verbose: Optional[bool] = None):
        self.config = config
        self.verbose = get_settings().VERBOSE if verbose is None else verbose
        self.output_dir = Path(config.pipeline.output_dir)
        self._truth: Optional[Image] = None
        self._dictionary: Optional[Dictionary] = None
        self._learned = False

    # ---- inputs -------------------------------------------------------------

    def validate(self) -> None:
        """Check files and shapes before any compute"""
        p, d = self.config.pipeline, self.config.dictionary
        for label, name in (("input", p.input), ("training", d.training), ("dictionary", d.path)):
            if name is not None and not Path(name).is_file():
                raise ConfigurationError(f"{label} file not found: {name}")
        truth = self.ground_truth()
        if d.path is not None:
            dictionary = self.dictionary()
            if dictionary.channels != self.channels:
                raise ShapeMismatchError(
                    f"{self.kind} needs a {self.channels}-channel dictionary, {d.path} has {dictionary.channels}"
                )
            patch_size = dictionary.patch_size
        else:
            patch_size = d.patch_size
            if d.atoms > d.n_patches:
                raise ConfigurationError(f"{d.atoms} atoms need at least as many training patches (n_patches={d.n_patches})")
        if d.step > patch_size:
            raise ConfigurationError(f"step {d.step} exceeds the patch size {patch_size}")
        build_grid(truth.width, truth.height, patch_size, d.step)

    def ground_truth(self) -> Image:
        if self._truth is None:
            p = self.config.pipeline
            if p.input is not None:
                img = get_image_repository().read(p.input)
                if img.channels != 1:
                    raise ShapeMismatchError(f"{p.input}: ground truth must be a scalar image")
                if img.samples.min() < 0.0 or img.samples.max() > 1.0:
                    img = normalize(img)
            else:
                img = synthesize(p.phantom, p.size, p.seed)
            self._truth = img
        return self._truth

    def training_image(self) -> Image:
        d, p = self.config.dictionary, self.config.pipeline
        if d.training is not None:
            img = get_image_repository().read(d.training)
            if img.channels == 1 and (img.samples.min() < 0.0 or img.samples.max() > 1.0):
                img = normalize(img)
        elif d.source == "reference":
            img = self.reference()
        elif d.source == "degraded":
            img = self.measure(self.reference())[1]
        elif p.phantom == "texture":
            img = texture_image(self.ground_truth().width, d.seed)
        else:
            img = gen_phantom(random_phantom_spec(self.ground_truth().width, 12, d.seed))
        if self.channels == 2 and img.channels == 1:
            img = sobel_gradients(img)
        return img

    def dictionary(self) -> Dictionary:
        if self._dictionary is None:
            d = self.config.dictionary
            if d.path is not None:
                self._dictionary = get_dictionary_repository().read(d.path)
            else:
                patches = sample_patches(self.training_image(), d.patch_size, d.n_patches, d.seed)
                trainer = KSVDTrainer(
                    n_atoms=d.atoms,
                    max_atoms=d.max_atoms,
                    iters=d.iters,
                    seed=d.seed,
                    channels=self.channels,
                    verbose=self.verbose,
                )
                self._dictionary = trainer.fit(patches).dictionary_
                self._learned = True
        return self._dictionary

    def solver_config(self, **overrides) -> SolverConfig:
        return self.config.solver.model_copy(update={k: v for k, v in overrides.items() if v is not None})

    # ---- pipeline hooks ------------------------------------------------------

    def reference(self) -> Image:
        """Image the restoration is scored against"""
        return self.ground_truth()

    def measure(self, reference: Image) -> Tuple[Any, Image]:
        """(data handed to the solver, baseline image scored as the degraded one)"""
        raise NotImplementedError

    def restore(self, data: Any, dictionary: Dictionary, step: int, solver: SolverConfig) -> Tuple[Image, SolveReport]:
        raise NotImplementedError

    def ssim_params(self, reference: Image) -> List[SsimParams]:
        return [SsimParams()] * reference.channels

    def channel_scores(self, reference: Image, candidate: Image) -> List[float]:
        params = self.ssim_params(reference)
        return [
            ssim(Image(reference.samples[c]), Image(candidate.samples[c]), params[c])
            for c in range(reference.channels)
        ]

    def score(self, reference: Image, baseline: Image, restored: Image) -> Dict[str, Any]:
        s_base = self.channel_scores(reference, baseline)
        s_rest = self.channel_scores(reference, restored)
        q = q_from_scores(float(np.mean(s_base)), float(np.mean(s_rest)))
        metrics: Dict[str, Any] = {
            "ssim_degraded": float(np.mean(s_base)),
            "ssim_restored": float(np.mean(s_rest)),
            "q": q.value,
            "q_capped": q.capped,
            "psnr_degraded": psnr(reference, baseline, self.ssim_params(reference)[0].data_range),
            "psnr_restored": psnr(reference, restored, self.ssim_params(reference)[0].data_range),
        }
        if reference.channels > 1:
            for c, (sb, sr) in enumerate(zip(s_base, s_rest)):
                metrics[f"ssim_degraded_{c}"] = sb
                metrics[f"ssim_restored_{c}"] = sr
        return metrics

    # ---- run -------------------------------------------------------------------

    def run(self) -> Dict[str, Any]:
        start_time = time.time()
        d = self.config.dictionary
        self.validate()
        if self.verbose:
            print("\n" + "=" * 60)
            print(f"🚀 {self.kind.upper()} PIPELINE")
            print("=" * 60)
            print("[1/4] 📊 Preparing data...")

        reference = self.reference()
        data, baseline = self.measure(reference)

        if self.verbose:
            print("[2/4] 📚 Preparing dictionary...")
        dictionary = self.dictionary()

        if self.verbose:
            print(f"[3/4] 🔄 Solving (step={d.step}, beta={self.config.solver.beta}, rho={self.config.solver.rho})...")
        restored, report = self.restore(data, dictionary, d.step, self.config.solver)

        metrics: Dict[str, Any] = {"pipeline": self.kind}
        metrics.update(self.score(reference, baseline, restored))
        metrics.update(
            sparsity=report.final_sparsity,
            iterations=report.iterations,
            converged=report.converged,
            objective=report.final_objective,
        )

        tiled = None
        if self.config.pipeline.compare_non_overlapping:
            tiled, tiled_report = self.restore(data, dictionary, dictionary.patch_size, self.config.solver)
            tiled_metrics = self.score(reference, baseline, tiled)
            metrics.update(
                ssim_non_overlapping=tiled_metrics["ssim_restored"],
                q_non_overlapping=tiled_metrics["q"],
                sparsity_non_overlapping=tiled_report.final_sparsity,
            )

        if self.verbose:
            print("[4/4] 💾 Writing artifacts...")
        self.write_artifacts(reference, data, baseline, restored, report, tiled)
        get_metrics_repository().write(metrics, self.output_dir / "metrics.txt")

        if self.verbose:
            for key, value in metrics.items():
                print(f"   • {key}={value}")
            print(f"✓ {self.kind} completed in {time.time() - start_time:.2f}s")
            print("=" * 60 + "\n")
        return metrics

    def write_artifacts(
        self,
        reference: Image,
        data: Any,
        baseline: Image,
        restored: Image,
        report: SolveReport,
        tiled: Optional[Image] = None,
    ) -> None:
        images = get_image_repository()
        images.write(reference, self.output_dir / "reference.pif")
        images.write(baseline, self.output_dir / "degraded.pif")
        images.write(restored, self.output_dir / "restored.pif")
        if tiled is not None:
            images.write(tiled, self.output_dir / "restored_non_overlapping.pif")
        if restored.channels == 1:
            images.write_pgm(restored, self.output_dir / "restored.pgm")
        if isinstance(data, Sinogram):
            get_sinogram_repository().write(data, self.output_dir / "sinogram.psn")
        if self._learned:
            get_dictionary_repository().write(self._dictionary, self.output_dir / "dictionary.pdc")
        get_report_repository().write(report, self.output_dir / "report.csv")


class FitPipeline(ExperimentPipeline):
    """Noiseless sparse fit of the ground truth"""

    kind = "fit"

    def measure(self, reference: Image) -> Tuple[Image, Image]:
        return reference, reference

    def restore(self, data, dictionary, step, solver):
        return denoise(data, dictionary, step, solver, verbose=self.verbose)

    def score(self, reference: Image, baseline: Image, restored: Image) -> Dict[str, Any]:
        return {
            "ssim_restored": ssim(reference, restored),
            "psnr_restored": psnr(reference, restored),
            "q": 1.0,
            "q_capped": False,
        }


class DenoisePipeline(ExperimentPipeline):
    """Gaussian image noise removed with P = identity"""

    kind = "denoise"

    def measure(self, reference: Image) -> Tuple[Image, Image]:
        p = self.config.pipeline
        noisy = add_image_noise(reference, p.noise, p.seed)
        return noisy, noisy

    def restore(self, data, dictionary, step, solver):
        return denoise(data, dictionary, step, solver, verbose=self.verbose)


class ReconstructPipeline(ExperimentPipeline):
    """Sparse-view reconstruction against the FBP baseline"""

    kind = "reconstruct"

    def geometry(self) -> Geometry:
        g = self.config.geometry
        return Geometry.parallel(self.ground_truth().width, g.n_angles, g.n_detectors, g.detector_spacing)

    def validate(self) -> None:
        super().validate()
        truth = self.ground_truth()
        if truth.width != truth.height:
            raise ShapeMismatchError(f"tomography needs a square image, got {truth.width}x{truth.height}")

    def acquire(self, reference: Image) -> Sinogram:
        p = self.config.pipeline
        return add_noise(project(reference, self.geometry()), p.noise, p.seed)

    def measure(self, reference: Image) -> Tuple[Sinogram, Image]:
        sino = self.acquire(reference)
        return sino, fbp(sino, sino.geometry, self.config.geometry.filter)

    def restore(self, data, dictionary, step, solver):
        return reconstruct(data, dictionary, step, solver, verbose=self.verbose)


class DpcPipeline(ReconstructPipeline):
    """Two-channel gradient reconstruction from a single DPC sinogram"""

    kind = "dpc"
    channels = 2

    def reference(self) -> Image:
        return sobel_gradients(self.ground_truth())

    def acquire(self, reference: Image) -> Sinogram:
        p = self.config.pipeline
        geometry = self.geometry()
        sx = project(Image(reference.samples[0]), geometry)
        sy = project(Image(reference.samples[1]), geometry)
        signal = add_noise(combine_dpc(sx, sy), p.noise, p.seed)
        return stack_channels(*split_dpc(signal))

    def ssim_params(self, reference: Image) -> List[SsimParams]:
        params = []
        for plane in reference.samples:
            spread = float(plane.max() - plane.min())
            params.append(SsimParams(data_range=spread if spread > 0 else 1.0))
        return params


PIPELINES: Dict[str, Type[ExperimentPipeline]] = {
    "fit": FitPipeline,
    "denoise": DenoisePipeline,
    "reconstruct": ReconstructPipeline,
    "dpc": DpcPipeline,
}


def build_pipeline(config: ExperimentConfig, verbose: Optional[bool] = None) -> ExperimentPipeline:
    return PIPELINES[config.pipeline.kind](config, verbose=verbose)


def run_experiment(path, verbose: Optional[bool] = None) -> Dict[str, Any]:
    """Load an experiment file, run its pipeline and return the metrics summary"""
    return build_pipeline(load_experiment_config(path), verbose).run()


def grid_search(
    pipeline: ExperimentPipeline,
    betas: Sequence[float],
    rhos: Sequence[float],
    include_non_overlapping: bool = True,
) -> pd.DataFrame:
    """Q for every (beta, rho) on the configured grid and, per beta, on the tiling grid.

    The tiling grid (step = patch size) has no overlap term, so it is
    solved once per beta with rho = 0.
    """
    if isinstance(pipeline, FitPipeline):
        raise ConfigurationError("grid search needs a degraded input; the fit pipeline has none")
    pipeline.validate()
    reference = pipeline.reference()
    data, baseline = pipeline.measure(reference)
    dictionary = pipeline.dictionary()
    step = pipeline.config.dictionary.step

    runs = [(True, step, beta, rho) for beta, rho in itertools.product(betas, rhos)]
    if include_non_overlapping:
        runs += [(False, dictionary.patch_size, beta, 0.0) for beta in betas]

    rows = []
    for overlapping, run_step, beta, rho in runs:
        restored, report = pipeline.restore(data, dictionary, run_step, pipeline.solver_config(beta=beta, rho=rho))
        metrics = pipeline.score(reference, baseline, restored)
        rows.append(
            {
                "overlapping": overlapping,
                "step": run_step,
                "beta": beta,
                "rho": rho,
                "ssim": metrics["ssim_restored"],
                "q": metrics["q"],
                "q_capped": metrics["q_capped"],
                "sparsity": report.final_sparsity,
                "iterations": report.iterations,
            }
        )
        if pipeline.verbose:
            mark = "✓" if report.converged else "⚠️"
            print(f"   {mark} overlap={overlapping} beta={beta:g} rho={rho:g}: Q={metrics['q']:.4f}")
    return pd.DataFrame(rows)


def best_by_grid(table: pd.DataFrame) -> pd.DataFrame:
    """Row with the highest Q for the overlapping and the tiling grid"""
    return table.loc[table.groupby("overlapping")["q"].idxmax()].reset_index(drop=True)
