"""
Overlap-constrained patch functional and its ISTA/FISTA minimization

    F(w) = ||y - P x||^2 + rho * sum_p ||E_p x - D_p||^2 + beta * ||w||_1

with D_p = sum_k w_kp phi_k the rendering of patch p and x = compose_core(w).
"""
import math
import time
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np

from .base import IForwardOperator
from .dictionary import sparse_code
from .patchgrid import PatchComposer, build_grid, compose_core
from .tomography import IdentityOperator, TomographicOperator, fbp
from ..core.config import get_settings
from ..core.errors import ConfigurationError, ShapeMismatchError, SolverDivergenceError
from ..models import CoefficientTensor, Dictionary, Image, PatchGrid, Sinogram
from ..schemas import SolveReport, SolverConfig

DataLike = Union[Image, Sinogram, np.ndarray]


@dataclass(frozen=True)
class ObjectiveTerms:
    F: float
    fidelity: float
    overlap: float
    l1: float


@dataclass(frozen=True)
class LipschitzEstimate:
    """Gradient Lipschitz constant; ``converged=False`` means ``value`` is the operator-norm bound"""

    value: float
    converged: bool
    iterations: int


def shrink(w: CoefficientTensor, alpha: float) -> CoefficientTensor:
    """Component-wise soft threshold sign(v) * max(|v| - alpha, 0)"""
    if alpha < 0:
        raise ConfigurationError(f"shrinkage threshold must be non-negative, got {alpha}")
    w = np.asarray(w, dtype=np.float64)
    return np.sign(w) * np.maximum(np.abs(w) - alpha, 0.0)


def sparsity(w: CoefficientTensor, eps: float = 1e-8) -> float:
    """Fraction of coefficients with |w_kp| > eps"""
    if eps < 0:
        raise ConfigurationError("sparsity threshold must be non-negative")
    w = np.asarray(w)
    if w.size == 0:
        return 0.0
    return float(np.count_nonzero(np.abs(w) > eps) / w.size)


def _as_data(y: DataLike) -> np.ndarray:
    if isinstance(y, (Image, Sinogram)):
        return y.samples
    return np.asarray(y, dtype=np.float64)


class PatchFunctional:
    """The functional F bound to one problem instance.

    f(w) (fidelity plus overlap) is quadratic in w; its gradient is
    evaluated with the gather/scatter maps of ``PatchComposer``:

        r   = E x - D
        g_D = compose^T(2 P^T(P x - y) + 2 rho E^T r) - 2 rho r
        g_w = g_D Phi^T
    """

    def __init__(
        self,
        y: DataLike,
        dictionary: Dictionary,
        grid: PatchGrid,
        op: IForwardOperator,
        rho: float,
        beta: float = 0.0,
    ):
        if rho < 0 or beta < 0:
            raise ConfigurationError("beta and rho must be non-negative")
        self.composer = PatchComposer(grid, dictionary)
        self.dictionary = dictionary
        self.grid = grid
        self.op = op
        self.rho = float(rho)
        self.beta = float(beta)
        self.y = _as_data(y)
        expected = op.apply(np.zeros(self.composer.image_shape)).shape
        if self.y.shape != expected:
            raise ShapeMismatchError(f"data {self.y.shape} does not match operator output {expected}")

    @property
    def coefficient_shape(self) -> Tuple[int, int]:
        return (self.grid.n_patches, self.dictionary.n_atoms)

    def image(self, w: CoefficientTensor) -> np.ndarray:
        """Composed (C, H, W) image of w"""
        return self.composer.compose_coefficients(w)

    def _residuals(self, w: CoefficientTensor, y: np.ndarray):
        D = self.composer.render(w)
        x = self.composer.compose(D)
        data_residual = self.op.apply(x) - y
        overlap_residual = self.composer.extract(x) - D
        return data_residual, overlap_residual

    def terms(self, w: CoefficientTensor) -> ObjectiveTerms:
        data_residual, overlap_residual = self._residuals(w, self.y)
        fidelity = float(np.sum(data_residual ** 2))
        overlap = float(np.sum(overlap_residual ** 2))
        l1 = float(np.sum(np.abs(w)))
        return ObjectiveTerms(
            F=fidelity + self.rho * overlap + self.beta * l1,
            fidelity=fidelity,
            overlap=overlap,
            l1=l1,
        )

    def smooth(self, w: CoefficientTensor) -> float:
        t = self.terms(w)
        return t.fidelity + self.rho * t.overlap

    def objective(self, w: CoefficientTensor) -> float:
        return self.terms(w).F

    def _gradient(self, w: CoefficientTensor, y) -> np.ndarray:
        data_residual, overlap_residual = self._residuals(w, y)
        image_grad = 2.0 * self.op.adjoint(data_residual)
        if self.rho:
            image_grad = image_grad + 2.0 * self.rho * self.composer.extract_adjoint(overlap_residual)
        patch_grad = self.composer.compose_adjoint(image_grad) - 2.0 * self.rho * overlap_residual
        return self.composer.render_adjoint(patch_grad)

    def gradient(self, w: CoefficientTensor) -> np.ndarray:
        return self._gradient(w, self.y)

    def hessian_apply(self, w: CoefficientTensor) -> np.ndarray:
        """Hessian of f applied to w (the gradient with y = 0)"""
        return self._gradient(w, 0.0)


def objective(
    w: CoefficientTensor,
    y: DataLike,
    dictionary: Dictionary,
    grid: PatchGrid,
    op: IForwardOperator,
    beta: float,
    rho: float,
) -> ObjectiveTerms:
    """F and its fidelity, overlap and L1 addends"""
    return PatchFunctional(y, dictionary, grid, op, rho, beta).terms(w)


def grad_f(
    w: CoefficientTensor,
    y: DataLike,
    dictionary: Dictionary,
    grid: PatchGrid,
    op: IForwardOperator,
    rho: float,
) -> np.ndarray:
    """Exact gradient of the smooth part of F"""
    return PatchFunctional(y, dictionary, grid, op, rho).gradient(w)


def _norm_bound(functional: PatchFunctional) -> float:
    """2 ||Phi||^2 (||P||^2 + rho (sqrt(max overlap) + 1)^2)"""
    phi = np.linalg.norm(functional.dictionary.flat, 2)
    max_count = float(functional.grid.overlap_count.max())
    op_norm = functional.op.norm_bound()
    return 2.0 * phi ** 2 * (op_norm ** 2 + functional.rho * (math.sqrt(max_count) + 1.0) ** 2)


def _power_iteration(
    functional: PatchFunctional,
    iters: int,
    tol: float,
    margin: float,
    seed: int,
) -> LipschitzEstimate:
    if iters < 10:
        raise ConfigurationError("Lipschitz power iteration needs at least 10 iterations")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(functional.coefficient_shape)
    v /= np.linalg.norm(v)
    previous = 0.0
    for it in range(1, iters + 1):
        hv = functional.hessian_apply(v)
        # Rayleigh quotient of the PSD Hessian
        value = float(np.sum(v * hv))
        norm = float(np.linalg.norm(hv))
        if norm == 0.0:
            return LipschitzEstimate(value=0.0, converged=True, iterations=it)
        if it > 1 and abs(value - previous) <= tol * abs(value):
            return LipschitzEstimate(value=margin * value, converged=True, iterations=it)
        previous = value
        v = hv / norm
    return LipschitzEstimate(value=_norm_bound(functional), converged=False, iterations=iters)


def estimate_lipschitz(
    dictionary: Dictionary,
    grid: PatchGrid,
    op: IForwardOperator,
    rho: float,
    iters: int = 200,
    seed: int = 0,
    tol: float = 1e-7,
    margin: float = 1.05,
) -> LipschitzEstimate:
    """Largest Hessian eigenvalue of f by power iteration, inflated by ``margin``.

    Falls back to the operator-norm bound (``converged=False``) when the
    iteration does not settle within ``iters`` steps.
    """
    composer = PatchComposer(grid, dictionary)
    y = np.zeros(op.apply(np.zeros(composer.image_shape)).shape)
    functional = PatchFunctional(y, dictionary, grid, op, rho)
    return _power_iteration(functional, iters, tol, margin, seed)


def warm_start(functional: PatchFunctional, max_atoms: int, x0: Optional[Image] = None) -> np.ndarray:
    """Per-patch OMP fit of x0, or of the least-squares scaled P^T y (y itself when P = identity)"""
    if x0 is not None:
        x = x0.samples
        if x.shape != functional.composer.image_shape:
            raise ShapeMismatchError(f"warm-start image {x.shape} != {functional.composer.image_shape}")
    else:
        x = functional.op.adjoint(functional.y)
        px = functional.op.apply(x)
        denom = float(np.sum(px * px))
        scale = float(np.sum(px * functional.y)) / denom if denom > 0 else 0.0
        x = scale * x
    patches = functional.composer.extract(x)
    return sparse_code(patches, functional.dictionary, max_atoms).T.copy()


def continuation_betas(config: SolverConfig) -> List[float]:
    """L1 weights of the continuation stages, ending with the target beta"""
    if config.beta == 0.0:
        return [0.0]
    return [config.beta * config.continuation_factor ** k for k in range(config.continuation, 0, -1)] + [config.beta]


def solve(
    y: DataLike,
    dictionary: Dictionary,
    grid: PatchGrid,
    op: IForwardOperator,
    config: SolverConfig,
    x0: Optional[Image] = None,
    verbose: Optional[bool] = None,
) -> Tuple[np.ndarray, SolveReport]:
    """Minimize F by ISTA, or FISTA when ``config.accelerate`` is set.

    With ``config.continuation`` stages the target beta is approached from
    beta * factor^k, each stage warm-starting the next. The report always
    records F at the target beta; only the last stage can converge.
    """
    verbose = get_settings().VERBOSE if verbose is None else verbose
    functional = PatchFunctional(y, dictionary, grid, op, config.rho, config.beta)

    if config.gamma is not None:
        gamma = config.gamma
        lipschitz = 1.0 / gamma
    else:
        estimate = _power_iteration(
            functional, config.lipschitz_iters, config.lipschitz_tol, config.lipschitz_margin, config.seed
        )
        if not estimate.converged and verbose:
            print(f"   ⚠️ Lipschitz power iteration did not converge, using bound L={estimate.value:.6g}")
        lipschitz = estimate.value
        gamma = 1.0 / lipschitz if lipschitz > 0 else 1.0

    if config.init != "zero" or x0 is not None:
        w = warm_start(functional, config.warm_max_atoms, x0)
    else:
        w = np.zeros(functional.coefficient_shape)

    initial = functional.terms(w)
    stages = continuation_betas(config)
    if verbose:
        print("\n" + "=" * 60)
        print(f"🔄 {'FISTA' if config.accelerate else 'ISTA'} on {grid.n_patches} patches x {dictionary.n_atoms} atoms")
        print("=" * 60)
        print(f"   op={op.kind}, beta={config.beta}, rho={config.rho}, L={lipschitz:.6g}, gamma={gamma:.6g}")
        if len(stages) > 1:
            print(f"   beta continuation: {', '.join(f'{b:.3g}' for b in stages)}")
        print(f"   F0 = {initial.F:.6g}")

    report = dict(objective=[], fidelity=[], overlap=[], l1=[], sparsity=[])
    start_time = time.time()
    converged = False
    used = 0
    stage_budget = config.max_iters // len(stages)

    for stage, beta in enumerate(stages):
        final_stage = stage == len(stages) - 1
        budget = config.max_iters - used if final_stage else stage_budget
        z = w
        t = 1.0
        start = initial if stage == 0 else functional.terms(w)
        start_F = start.fidelity + config.rho * start.overlap + beta * start.l1
        previous = start_F

        for _ in range(budget):
            used += 1
            w_next = shrink(z - gamma * functional.gradient(z), beta * gamma)
            if config.accelerate:
                if config.restart and np.vdot(z - w_next, w_next - w) > 0.0:
                    # momentum points uphill: fall back to a plain proximal step
                    t = 1.0
                    z = w_next
                else:
                    t_next = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
                    z = w_next + ((t - 1.0) / t_next) * (w_next - w)
                    t = t_next
            else:
                z = w_next
            w = w_next

            terms = functional.terms(w)
            report["objective"].append(terms.F)
            report["fidelity"].append(terms.fidelity)
            report["overlap"].append(terms.overlap)
            report["l1"].append(terms.l1)
            report["sparsity"].append(sparsity(w, config.sparsity_eps))

            current = terms.fidelity + config.rho * terms.overlap + beta * terms.l1
            if not config.accelerate and start_F > 0 and current > 10.0 * start_F:
                raise SolverDivergenceError(
                    f"ISTA objective grew from {start_F:.6g} to {current:.6g} at iteration {used}; "
                    f"step gamma={gamma:.6g} is too large for this problem"
                )
            if verbose and used % config.report_every == 0:
                print(
                    f"   iter {used:5d}: F={terms.F:.6g} fid={terms.fidelity:.6g} "
                    f"ovl={terms.overlap:.6g} l1={terms.l1:.6g} s={report['sparsity'][-1]:.4f}"
                )

            if previous == 0.0 or abs(current - previous) / previous < config.rel_tol:
                converged = final_stage
                break
            previous = current

    solve_report = SolveReport(
        **report,
        initial_objective=initial.F,
        iterations=len(report["objective"]),
        converged=converged,
        gamma=gamma,
        lipschitz=lipschitz,
    )
    if verbose:
        mark = "✓" if converged else "⚠️"
        print(f"   {mark} {solve_report.iterations} iterations in {time.time() - start_time:.2f}s, "
              f"F={solve_report.final_objective:.6g}, s={solve_report.final_sparsity:.4f}")
        print("=" * 60 + "\n")
    return w, solve_report


def denoise(
    noisy: Image,
    dictionary: Dictionary,
    step: int,
    config: SolverConfig,
    verbose: Optional[bool] = None,
) -> Tuple[Image, SolveReport]:
    """Patch-based denoising (P = identity)"""
    grid = build_grid(noisy.width, noisy.height, dictionary.patch_size, step)
    op = IdentityOperator()
    w, report = solve(noisy, dictionary, grid, op, config, verbose=verbose)
    return compose_core(w, dictionary, grid), report


def reconstruct(
    sino: Sinogram,
    dictionary: Dictionary,
    step: int,
    config: SolverConfig,
    x0: Optional[Image] = None,
    verbose: Optional[bool] = None,
) -> Tuple[Image, SolveReport]:
    """Patch-based tomographic reconstruction on the sinogram's geometry"""
    if x0 is None and config.init == "fbp":
        x0 = fbp(sino, sino.geometry)
    side = sino.geometry.image_size
    grid = build_grid(side, side, dictionary.patch_size, step)
    op = TomographicOperator(sino.geometry)
    w, report = solve(sino, dictionary, grid, op, config, x0=x0, verbose=verbose)
    return compose_core(w, dictionary, grid), report


