"""Services layer: patch geometry, sparse coding, solver, tomography, metrics and experiments"""
from .base import IForwardOperator, IDictionaryTrainer, IPipeline
from .patchgrid import (
    PatchComposer,
    build_grid,
    compose_core,
    extract_patch,
    render_patch,
    sample_patches,
    write_patch,
)
from .dictionary import KSVDTrainer, init_dictionary, ksvd_train, omp, sparse_code
from .solver import (
    LipschitzEstimate,
    ObjectiveTerms,
    PatchFunctional,
    denoise,
    estimate_lipschitz,
    grad_f,
    objective,
    reconstruct,
    shrink,
    solve,
    sparsity,
)
from .tomography import (
    IdentityOperator,
    JosephProjector,
    TomographicOperator,
    add_noise,
    backproject,
    combine_dpc,
    fbp,
    project,
    split_dpc,
    uniform_angles,
)
from .metrics import QualityFactor, psnr, q_factor, ssim
from .phantoms import (
    add_image_noise,
    disk_spec,
    gen_phantom,
    random_phantom_spec,
    shepp_logan_spec,
    sobel_gradients,
    texture_image,
)
from .experiments import grid_search, load_experiment_config, run_experiment

__all__ = [
    "IForwardOperator",
    "IDictionaryTrainer",
    "IPipeline",
    "PatchComposer",
    "build_grid",
    "compose_core",
    "extract_patch",
    "render_patch",
    "sample_patches",
    "write_patch",
    "KSVDTrainer",
    "init_dictionary",
    "ksvd_train",
    "omp",
    "sparse_code",
    "LipschitzEstimate",
    "ObjectiveTerms",
    "PatchFunctional",
    "denoise",
    "estimate_lipschitz",
    "grad_f",
    "objective",
    "reconstruct",
    "shrink",
    "solve",
    "sparsity",
    "IdentityOperator",
    "JosephProjector",
    "TomographicOperator",
    "add_noise",
    "backproject",
    "combine_dpc",
    "fbp",
    "project",
    "split_dpc",
    "uniform_angles",
    "QualityFactor",
    "psnr",
    "q_factor",
    "ssim",
    "add_image_noise",
    "disk_spec",
    "gen_phantom",
    "random_phantom_spec",
    "shepp_logan_spec",
    "sobel_gradients",
    "texture_image",
    "grid_search",
    "load_experiment_config",
    "run_experiment",
]
