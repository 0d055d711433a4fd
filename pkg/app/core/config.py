"""
Core configuration module following Single Responsibility Principle
"""
from functools import lru_cache

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings with environment variables (prefix ``PATCHREC_``)"""

    # Patch geometry
    PATCH_SIZE: int = 7
    STEP: int = 3  # (3l, 3n) replication -> nine-fold overlap for m = 7

    # Dictionary learning
    N_ATOMS: int = 100
    MAX_ATOMS: int = 4  # atoms per patch in the OMP step
    KSVD_ITERS: int = 20
    N_TRAINING_PATCHES: int = 4000

    # Solver
    BETA: float = 0.02
    RHO: float = 1.0
    MAX_ITERS: int = 1000
    REL_TOL: float = 1e-6
    LIPSCHITZ_ITERS: int = 200
    LIPSCHITZ_TOL: float = 1e-7
    LIPSCHITZ_MARGIN: float = 1.05
    SPARSITY_EPS: float = 1e-8

    # Metrics
    Q_CAP: float = 1e9

    # Runs
    SEED: int = 0
    OUTPUT_DIR: str = "outputs"
    VERBOSE: bool = False

    model_config = SettingsConfigDict(
        env_prefix="PATCHREC_",
        env_file=".env",
        case_sensitive=True,
        extra="ignore",
    )


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance (Singleton pattern)"""
    return Settings()
