"""
Sparse coding (OMP) and dictionary learning (K-SVD) over scalar or vectorial patches
"""
import math
import time
import warnings
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg
from sklearn.linear_model import orthogonal_mp_gram

from .base import IDictionaryTrainer
from ..core.errors import ConfigurationError, ShapeMismatchError, TrainingDataError
from ..models import Dictionary, SparseCode


def _as_training_matrix(patches, channels: Optional[int] = None) -> Tuple[np.ndarray, int, int]:
    """Accept (N, C, m, m) blocks or an (N, C*m*m) matrix; return (X, m, C)"""
    X = np.asarray(patches, dtype=np.float64)
    if X.ndim == 4:
        n, c, m, m2 = X.shape
        if m != m2:
            raise ShapeMismatchError(f"patch blocks must be square, got {X.shape[2:]}")
        return X.reshape(n, -1), m, c
    if X.ndim == 3:
        # (N, m, m) scalar blocks
        return X.reshape(X.shape[0], -1), X.shape[1], 1
    if X.ndim != 2:
        raise ShapeMismatchError(f"training patches must be 2D or 4D, got shape {X.shape}")
    channels = channels or 1
    m = math.isqrt(X.shape[1] // channels)
    if channels * m * m != X.shape[1]:
        raise ShapeMismatchError(f"signal length {X.shape[1]} is not {channels} x m x m")
    return X, m, channels


def _flip_sign(atom: np.ndarray, coefficients: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Largest-magnitude sample positive"""
    if atom[np.argmax(np.abs(atom))] < 0:
        return -atom, -coefficients
    return atom, coefficients


def omp(signal, dictionary: Dictionary, max_atoms: int, tol: float = 0.0) -> SparseCode:
    """Orthogonal Matching Pursuit for one signal.

    Each step adds the atom most correlated with the residual and refits
    the whole support by least squares. A support whose system loses rank
    is not extended; the code is flagged ``rank_deficient``.
    """
    if max_atoms < 1:
        raise ConfigurationError("max_atoms must be at least 1")
    y = np.asarray(signal, dtype=np.float64).ravel()
    A = dictionary.flat.T
    if y.shape[0] != A.shape[0]:
        raise ShapeMismatchError(f"signal length {y.shape[0]} != atom length {A.shape[0]}")

    support: List[int] = []
    coefficients = np.zeros(0)
    residual = y.copy()
    residual_norm = float(np.linalg.norm(residual))
    history = [residual_norm]
    rank_deficient = False
    floor = 1e-14 * max(1.0, residual_norm)

    while len(support) < min(max_atoms, A.shape[1]) and residual_norm > tol:
        correlations = A.T @ residual
        correlations[support] = 0.0
        k = int(np.argmax(np.abs(correlations)))
        if abs(correlations[k]) <= floor:
            break
        trial = support + [k]
        sub = A[:, trial]
        solution, _, rank, _ = linalg.lstsq(sub, y)
        if rank < len(trial):
            rank_deficient = True
            break
        support, coefficients = trial, solution
        residual = y - sub @ coefficients
        residual_norm = float(np.linalg.norm(residual))
        history.append(residual_norm)

    return SparseCode(
        support=support,
        coefficients=np.asarray(coefficients, dtype=np.float64),
        residual_norm=residual_norm,
        residual_history=history,
        rank_deficient=rank_deficient,
    )


def sparse_code(patches: np.ndarray, dictionary: Dictionary, max_atoms: int) -> np.ndarray:
    """Batch OMP of (N, L) patches; returns the (K, N) code matrix"""
    X = np.asarray(patches, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != dictionary.signal_length:
        raise ShapeMismatchError(
            f"patches {X.shape} do not match atom length {dictionary.signal_length}"
        )
    A = dictionary.flat.T
    n_nonzero = min(max_atoms, dictionary.n_atoms)
    with warnings.catch_warnings():
        # premature stops on exact fits or dependent atoms are expected here
        warnings.simplefilter("ignore", RuntimeWarning)
        codes = orthogonal_mp_gram(A.T @ A, A.T @ X.T, n_nonzero_coefs=n_nonzero)
    return np.asarray(codes, dtype=np.float64).reshape(dictionary.n_atoms, X.shape[0])


def init_dictionary(
    patches,
    n_atoms: int,
    seed: int = 0,
    channels: Optional[int] = None,
) -> Dictionary:
    """Constant atom 0 plus K-1 distinct random training patches, unit-normalized.

    Falls back to seeded gaussian atoms when the training set has fewer
    than K-1 distinct non-zero patches.
    """
    if n_atoms < 1:
        raise ConfigurationError("a dictionary needs at least one atom")
    X, m, C = _as_training_matrix(patches, channels)
    L = X.shape[1]
    rng = np.random.default_rng(seed)

    atoms = np.empty((n_atoms, L))
    atoms[0] = 1.0 / math.sqrt(L)
    if n_atoms > 1:
        candidates = X[np.linalg.norm(X, axis=1) > 0]
        distinct = np.unique(candidates, axis=0) if candidates.size else candidates
        if distinct.shape[0] >= n_atoms - 1:
            chosen = distinct[rng.choice(distinct.shape[0], n_atoms - 1, replace=False)]
        else:
            chosen = rng.standard_normal((n_atoms - 1, L))
        atoms[1:] = chosen / np.linalg.norm(chosen, axis=1, keepdims=True)
    return Dictionary.from_flat(atoms, m, C)


class KSVDTrainer(IDictionaryTrainer):
    """
    K-SVD dictionary learning with a fixed constant atom 0
    Alternates batch OMP coding with rank-1 SVD atom updates
    """

    def __init__(
        self,
        n_atoms: int = 100,
        max_atoms: int = 4,
        iters: int = 20,
        seed: int = 0,
        channels: Optional[int] = None,
        verbose: bool = False,
    ):
        if iters < 1:
            raise ConfigurationError("K-SVD needs at least one iteration")
        if max_atoms < 1:
            raise ConfigurationError("max_atoms must be at least 1")
        self.n_atoms = n_atoms
        self.max_atoms = max_atoms
        self.iters = iters
        self.seed = seed
        self.channels = channels
        self.verbose = verbose

        self.dictionary_: Optional[Dictionary] = None
        self.codes_: Optional[np.ndarray] = None
        self.initial_error_: float = float("nan")
        self.error_history_: List[float] = []

    def fit(self, patches) -> "KSVDTrainer":
        X, m, C = _as_training_matrix(patches, self.channels)
        if X.shape[0] < self.n_atoms:
            raise TrainingDataError(
                f"{X.shape[0]} training patches for {self.n_atoms} atoms; need at least as many patches as atoms"
            )
        if self.verbose:
            print("\n" + "=" * 60)
            print("[1/3] 📚 TRAINING K-SVD DICTIONARY")
            print("=" * 60)
            print(f"      Patches: {X.shape[0]}, patch size: {m}x{m}x{C}")
            print(f"      Atoms: {self.n_atoms}, OMP atoms: {self.max_atoms}, iterations: {self.iters}")

        start_time = time.time()
        dictionary = init_dictionary(X, self.n_atoms, self.seed, C)
        Y = X.T
        D = dictionary.flat.T.copy()
        G = sparse_code(X, dictionary, self.max_atoms)
        R = Y - D @ G
        self.initial_error_ = float(np.sum(R ** 2))
        self.error_history_ = []

        if self.verbose:
            print(f"[2/3] 🔄 Initial representation error: {self.initial_error_:.6g}")

        for it in range(self.iters):
            if it > 0:
                G, R = self._recode(X, D, G, R, m, C)
            self._update_atoms(Y, D, G, R)
            R = Y - D @ G
            error = float(np.sum(R ** 2))
            self.error_history_.append(error)
            if self.verbose:
                print(f"      iter {it + 1:3d}: error = {error:.6g}")

        self.dictionary_ = Dictionary.from_flat(D.T, m, C)
        self.codes_ = G
        if self.verbose:
            print(f"[3/3] ✅ Training completed in {time.time() - start_time:.2f}s")
            print("=" * 60 + "\n")
        return self

    def _recode(self, X, D, G, R, m: int, C: int):
        """Fresh OMP codes, keeping each patch's previous code when it fits better"""
        fresh = sparse_code(X, Dictionary.from_flat(D.T, m, C), self.max_atoms)
        fresh_residual = X.T - D @ fresh
        better = np.sum(fresh_residual ** 2, axis=0) < np.sum(R ** 2, axis=0)
        G = G.copy()
        R = R.copy()
        G[:, better] = fresh[:, better]
        R[:, better] = fresh_residual[:, better]
        return G, R

    def _update_atoms(self, Y: np.ndarray, D: np.ndarray, G: np.ndarray, R: np.ndarray) -> None:
        """One sweep over the atoms; updates D, G and the residual R in place"""
        replaced = np.zeros(Y.shape[1], dtype=bool)
        for k in range(D.shape[1]):
            used = np.flatnonzero(G[k])
            if k == 0:
                # constant atom stays; only its coefficients are refitted
                if used.size:
                    E = R[:, used] + np.outer(D[:, 0], G[0, used])
                    g = D[:, 0] @ E
                    G[0, used] = g
                    R[:, used] = E - np.outer(D[:, 0], g)
                continue
            if used.size == 0:
                self._replace_dead_atom(Y, D, R, k, replaced)
                continue
            E = R[:, used] + np.outer(D[:, k], G[k, used])
            U, s, Vt = np.linalg.svd(E, full_matrices=False)
            atom, g = _flip_sign(U[:, 0], s[0] * Vt[0])
            D[:, k] = atom
            G[k, used] = g
            R[:, used] = E - np.outer(atom, g)

    @staticmethod
    def _replace_dead_atom(Y, D, R, k: int, replaced: np.ndarray) -> None:
        """Unused atom -> worst-fit training patch, normalized"""
        errors = np.sum(R ** 2, axis=0)
        errors[replaced] = -1.0
        worst = int(np.argmax(errors))
        if errors[worst] <= 0:
            return
        replaced[worst] = True
        patch = Y[:, worst]
        atom, _ = _flip_sign(patch / np.linalg.norm(patch), np.zeros(0))
        D[:, k] = atom

    def evaluate(self, patches) -> Dict[str, float]:
        """Representation error of the trained dictionary on new patches"""
        if self.dictionary_ is None:
            raise ConfigurationError("trainer has not been fitted")
        X, _, _ = _as_training_matrix(patches, self.dictionary_.channels)
        codes = sparse_code(X, self.dictionary_, self.max_atoms)
        residual = X.T - self.dictionary_.flat.T @ codes
        error = float(np.sum(residual ** 2))
        return {
            "error": error,
            "rmse": float(np.sqrt(error / residual.size)),
            "mean_nonzeros": float(np.mean(np.count_nonzero(codes, axis=0))),
        }


def ksvd_train(
    patches,
    n_atoms: int,
    max_atoms: int = 4,
    iters: int = 20,
    seed: int = 0,
    channels: Optional[int] = None,
    verbose: bool = False,
) -> Dictionary:
    """Train a K-SVD dictionary and return it"""
    trainer = KSVDTrainer(
        n_atoms=n_atoms,
        max_atoms=max_atoms,
        iters=iters,
        seed=seed,
        channels=channels,
        verbose=verbose,
    )
    return trainer.fit(patches).dictionary_
