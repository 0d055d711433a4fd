"""
Configuration, geometry and report schemas
"""
import math
import warnings
from typing import List, Literal, Optional, Tuple

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Geometry(BaseModel):
    """Parallel-beam acquisition geometry"""

    model_config = ConfigDict(frozen=True)

    image_size: int = Field(..., ge=1, description="Side of the square reconstruction grid, pixels")
    angles: List[float] = Field(..., min_length=1, description="Projection angles in radians, within [0, pi)")
    n_detectors: int = Field(..., ge=1, description="Detector bins per projection")
    detector_spacing: float = Field(1.0, gt=0, description="Detector bin width, pixels")
    rotation_center: Optional[float] = Field(
        None, description="Detector coordinate of the rotation axis; default is the detector middle"
    )

    @field_validator("angles")
    @classmethod
    def _check_angles(cls, angles: List[float]) -> List[float]:
        for a in angles:
            if not (0.0 <= a < math.pi):
                raise ValueError(f"angle {a} outside [0, pi)")
        for a, b in zip(angles, angles[1:]):
            if not b > a:
                raise ValueError("angles must be strictly increasing")
        return angles

    @model_validator(mode="after")
    def _warn_short_detector(self) -> "Geometry":
        if self.n_detectors * self.detector_spacing < self.image_size * math.sqrt(2.0):
            warnings.warn(
                "detector row is shorter than the image diagonal; corner pixels are not fully sampled",
                stacklevel=2,
            )
        return self

    @property
    def n_angles(self) -> int:
        return len(self.angles)

    @property
    def center(self) -> float:
        if self.rotation_center is None:
            return (self.n_detectors - 1) / 2.0
        return self.rotation_center

    @classmethod
    def parallel(
        cls,
        image_size: int,
        n_angles: int,
        n_detectors: Optional[int] = None,
        detector_spacing: float = 1.0,
    ) -> "Geometry":
        """Uniform angles over [0, pi), endpoint excluded"""
        if n_detectors is None:
            n_detectors = default_detector_count(image_size, detector_spacing)
        return cls(
            image_size=image_size,
            angles=uniform_angles(n_angles),
            n_detectors=n_detectors,
            detector_spacing=detector_spacing,
        )


def uniform_angles(n_angles: int) -> List[float]:
    """n angles uniform over [0, pi), endpoint excluded"""
    return [math.pi * i / n_angles for i in range(n_angles)]


def default_detector_count(image_size: int, detector_spacing: float = 1.0) -> int:
    """Smallest detector row covering the image diagonal"""
    return int(math.ceil(image_size * math.sqrt(2.0) / detector_spacing))


class SolverConfig(BaseModel):
    """ISTA/FISTA settings for the overlap-constrained functional"""

    beta: float = Field(0.02, ge=0, description="L1 weight")
    rho: float = Field(1.0, ge=0, description="Overlap similarity weight")
    gamma: Optional[float] = Field(None, gt=0, description="Step size; derived from the Lipschitz estimate when unset")
    max_iters: int = Field(1000, ge=1)
    rel_tol: float = Field(1e-6, ge=0, description="Stop when the relative objective change drops below this")
    accelerate: bool = Field(True, description="FISTA momentum when set, plain ISTA otherwise")
    restart: bool = Field(False, description="Reset the FISTA momentum whenever it points uphill")
    continuation: int = Field(0, ge=0, description="Warm-started stages at beta * factor^k before the target beta")
    continuation_factor: float = Field(10.0, gt=1.0)
    init: Literal["zero", "warm", "fbp"] = Field(
        "zero", description="Zero coefficients, OMP fit of the scaled P^T y, or OMP fit of the FBP image"
    )
    warm_max_atoms: int = Field(4, ge=1, description="OMP atoms per patch for the warm start")
    lipschitz_iters: int = Field(200, ge=10)
    lipschitz_tol: float = Field(1e-7, gt=0)
    lipschitz_margin: float = Field(1.05, ge=1.0)
    sparsity_eps: float = Field(1e-8, ge=0)
    report_every: int = Field(50, ge=1)
    seed: int = 0

    @classmethod
    def from_settings(cls, settings, **overrides) -> "SolverConfig":
        values = dict(
            beta=settings.BETA,
            rho=settings.RHO,
            max_iters=settings.MAX_ITERS,
            rel_tol=settings.REL_TOL,
            warm_max_atoms=settings.MAX_ATOMS,
            lipschitz_iters=settings.LIPSCHITZ_ITERS,
            lipschitz_tol=settings.LIPSCHITZ_TOL,
            lipschitz_margin=settings.LIPSCHITZ_MARGIN,
            sparsity_eps=settings.SPARSITY_EPS,
            seed=settings.SEED,
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


class SsimParams(BaseModel):
    """Gaussian-window SSIM parameters (original SSIM defaults)"""

    model_config = ConfigDict(frozen=True)

    window: int = Field(11, ge=3, description="Window side, odd")
    sigma: float = Field(1.5, gt=0)
    k1: float = Field(0.01, gt=0)
    k2: float = Field(0.03, gt=0)
    data_range: float = Field(1.0, gt=0)

    @field_validator("window")
    @classmethod
    def _odd_window(cls, window: int) -> int:
        if window % 2 == 0:
            raise ValueError("SSIM window side must be odd")
        return window


class EllipseSpec(BaseModel):
    """One ellipse in normalized coordinates: the image spans [-1, 1] on both axes"""

    center: Tuple[float, float] = Field((0.0, 0.0), description="(x, y) center")
    axes: Tuple[float, float] = Field(..., description="(a, b) semi-axes")
    rotation: float = Field(0.0, description="Rotation in degrees")
    intensity: float = Field(1.0, description="Additive intensity")

    @field_validator("axes")
    @classmethod
    def _positive_axes(cls, axes: Tuple[float, float]) -> Tuple[float, float]:
        if axes[0] <= 0 or axes[1] <= 0:
            raise ValueError("ellipse semi-axes must be positive")
        return axes


class PhantomSpec(BaseModel):
    """Sum-of-ellipses phantom"""

    size: int = Field(256, ge=32)
    ellipses: List[EllipseSpec] = Field(default_factory=list)
    seed: Optional[int] = Field(None, description="Seed the spec was generated from, when randomized")


class SolveReport(BaseModel):
    """Per-iteration objective breakdown of one solve"""

    objective: List[float] = Field(default_factory=list)
    fidelity: List[float] = Field(default_factory=list)
    overlap: List[float] = Field(default_factory=list)
    l1: List[float] = Field(default_factory=list)
    sparsity: List[float] = Field(default_factory=list)
    initial_objective: float = 0.0
    iterations: int = 0
    converged: bool = False
    gamma: float = 0.0
    lipschitz: float = 0.0

    @model_validator(mode="after")
    def _history_matches_iterations(self) -> "SolveReport":
        if len(self.objective) != self.iterations:
            raise ValueError("objective history length must equal the iterations used")
        return self

    @property
    def final_sparsity(self) -> float:
        return self.sparsity[-1] if self.sparsity else 0.0

    @property
    def final_objective(self) -> float:
        return self.objective[-1] if self.objective else self.initial_objective

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "iteration": range(1, self.iterations + 1),
                "F": self.objective,
                "fidelity": self.fidelity,
                "overlap": self.overlap,
                "l1": self.l1,
                "sparsity": self.sparsity,
            }
        )


class PipelineSection(BaseModel):
    """[pipeline] section of an experiment file"""

    kind: Literal["fit", "denoise", "reconstruct", "dpc"]
    input: Optional[str] = Field(None, description="Ground-truth image (PIF1 or PGM); synthesized when unset")
    phantom: Literal["shepp-logan", "random", "texture", "disk"] = "shepp-logan"
    size: int = Field(256, ge=32)
    noise: float = Field(0.0, ge=0, description="Image sigma (denoise) or sinogram sigma fraction (reconstruct, dpc)")
    compare_non_overlapping: bool = Field(False, description="Also solve with step = patch size")
    seed: int = 0
    output_dir: str = "outputs"


class GeometrySection(BaseModel):
    """[geometry] section of an experiment file"""

    n_angles: int = Field(60, ge=2)
    n_detectors: Optional[int] = Field(None, ge=1)
    detector_spacing: float = Field(1.0, gt=0)
    filter: Literal["ramlak", "hann"] = "ramlak"


class DictionarySection(BaseModel):
    """[dictionary] section of an experiment file"""

    path: Optional[str] = Field(None, description="PDC1 file; learned from a training image when unset")
    training: Optional[str] = Field(None, description="Training image; a separate synthetic image when unset")
    source: Literal["synthetic", "reference", "degraded"] = Field(
        "synthetic",
        description="Training image when no file is given: a separate synthetic image, the reference itself "
        "or the degraded baseline (noisy image or FBP)",
    )
    atoms: int = Field(100, ge=1)
    max_atoms: int = Field(4, ge=1)
    patch_size: int = Field(7, ge=1)
    step: int = Field(3, ge=1)
    iters: int = Field(20, ge=1)
    n_patches: int = Field(4000, ge=1)
    seed: int = 1

    @model_validator(mode="after")
    def _one_training_source(self) -> "DictionarySection":
        if self.training is not None and self.source != "synthetic":
            raise ValueError("give either a training file or a training source, not both")
        return self


class ExperimentConfig(BaseModel):
    """A whole experiment file"""

    pipeline: PipelineSection
    solver: SolverConfig = Field(default_factory=SolverConfig)
    geometry: GeometrySection = Field(default_factory=GeometrySection)
    dictionary: DictionarySection = Field(default_factory=DictionarySection)

    @model_validator(mode="after")
    def _step_fits_patch(self) -> "ExperimentConfig":
        if self.dictionary.step > self.dictionary.patch_size:
            raise ValueError("step must not exceed the patch size")
        return self
