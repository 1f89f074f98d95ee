"""Application configuration."""

from functools import lru_cache

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Environment-driven settings (prefix ``LGI_``)."""

    model_config = SettingsConfigDict(
        env_prefix="LGI_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Optimizer
    restarts: int = 64
    penalty_start: float = 1e2
    penalty_growth: float = 10.0
    penalty_stages: int = 4
    constraint_tolerance: float = 1e-6
    simplex_max_iter: int = 4000
    polish_max_iter: int = 200

    # Certification
    quantum_bound: float = 1.5
    nsit_quantum_bound: float = 0.5

    # Simulation
    audit_mass: float = 0.10
    rounds_per_second: float = 3865.0
    chunk_size: int = 65536
    workers: int = 1

    # Output
    output_dir: str = "data"
    csv_significant_digits: int = 6
    schema_version: int = 1


@lru_cache
def get_settings() -> Settings:
    return Settings()
