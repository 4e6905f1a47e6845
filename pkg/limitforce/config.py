"""Configuration management using Pydantic settings"""
from pydantic_settings import BaseSettings
from functools import lru_cache


class Settings(BaseSettings):
    # Sampling
    DEFAULT_SEED: int = 0
    DEFAULT_SAMPLES: int = 100_000
    MC_CHUNKS: int = 8
    MC_WORKERS: int = 1

    # Enumeration caps
    EXACT_MAX_ORDER: int = 9
    EXACT_MAX_N: int = 64
    DIAGONAL_MAX_ORDER: int = 7
    GRAPH_MAX_ORDER: int = 8
    QUADRATURE_MAX_ORDER: int = 5

    # Geometric block families
    TAIL_EPSILON: float = 1e-12
    MARGINAL_TOL: float = 1e-9

    # Verification tolerances
    Z_SCORE: float = 4.0
    EXACT_TOL: float = 1e-10
    MC_ABS_TOL: float = 1e-4
    QUADRATURE_TOL: float = 1e-3
    QUADRATURE_GRID: int = 32
    QUADRATURE_MAX_GRID: int = 256
    STRUCTURAL_TOL: float = 1e-12
    SUPPORT_SAMPLES: int = 10_000
    INNER_SAMPLES: int = 64

    # Witness solver
    WITNESS_MAX_ITER: int = 50
    WITNESS_TOL: float = 1e-10
    WITNESS_MAX_HALVINGS: int = 20
    WITNESS_CONTINUATION_STEPS: int = 8
    WITNESS_MATCH_TOL: float = 1e-9
    WITNESS_DISTINCT_TOL: float = 1e-8

    # App
    LOG_LEVEL: str = "INFO"

    class Config:
        env_file = ".env"
        case_sensitive = True


@lru_cache()
def get_settings() -> Settings:
    return Settings()
