"""
Configuration settings for fpld
"""

from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings with environment variable support (prefix FPLD_)."""

    model_config = SettingsConfigDict(
        env_prefix="FPLD_",
        env_file=".env",
        case_sensitive=True,
        extra="ignore",
    )

    # Application
    APP_NAME: str = "fpld"
    APP_VERSION: str = "1.0.0"

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "text"  # json or text
    LOG_FILE: Optional[str] = None
    PROGRESS: bool = False

    # Output
    OUT_DIR: str = "results"
    THREADS: int = 0  # 0 = available cores

    # Exact-path budgets
    MOMENT_DEGREE_CAP: int = 12
    PARTITION_MAX_VARS: int = 10
    SUPPORT_BUDGET: int = 10_000
    BASIS_BUDGET: int = 2000
    SW_ENUM_BUDGET: int = 1_000_000
    HERMITE_WEIGHT_BUDGET: int = 100_000_000
    QUENCHED_ENUM_BUDGET: int = 2_000_000
    QUENCHED_STRATUM_EXACT: int = 50_000
    QUENCHED_STRATUM_SAMPLES: int = 10_000
    GAMMA_ENUM_BUDGET: int = 100_000_000

    # Monte-Carlo defaults
    MC_SAMPLES: int = 100_000
    REFERENCE_SET_SIZE: int = 2048

    # Linear algebra
    PINV_CUTOFF: float = 1e-10
    GRAM_NEG_TOL: float = 1e-9

    # Experiments
    LAMBDA_POINTS_PER_DECADE: int = 16
    SCALING_BAND: float = 4.0
    CROSSING_FACTOR: float = 8.0


# Global settings instance
settings = Settings()


def validate_settings(cfg: Optional[Settings] = None) -> bool:
    """Validate critical settings."""
    cfg = cfg or settings
    errors = []

    if cfg.LOG_FORMAT not in ("json", "text"):
        errors.append(f"LOG_FORMAT must be 'json' or 'text', got {cfg.LOG_FORMAT!r}")

    if cfg.THREADS < 0:
        errors.append("THREADS must be >= 0")

    for name in (
        "MOMENT_DEGREE_CAP",
        "PARTITION_MAX_VARS",
        "SUPPORT_BUDGET",
        "BASIS_BUDGET",
        "SW_ENUM_BUDGET",
        "HERMITE_WEIGHT_BUDGET",
        "QUENCHED_ENUM_BUDGET",
        "QUENCHED_STRATUM_EXACT",
        "QUENCHED_STRATUM_SAMPLES",
        "GAMMA_ENUM_BUDGET",
        "MC_SAMPLES",
        "REFERENCE_SET_SIZE",
        "LAMBDA_POINTS_PER_DECADE",
    ):
        if getattr(cfg, name) <= 0:
            errors.append(f"{name} must be positive")

    if not 0 < cfg.PINV_CUTOFF < 1:
        errors.append("PINV_CUTOFF must lie in (0, 1)")

    if cfg.SCALING_BAND <= 1 or cfg.CROSSING_FACTOR <= 1:
        errors.append("SCALING_BAND and CROSSING_FACTOR must exceed 1")

    if errors:
        raise ValueError(f"Configuration errors: {', '.join(errors)}")

    return True


def config_summary(cfg: Optional[Settings] = None) -> dict:
    """Budgets and defaults that determine experiment output, for manifests."""
    cfg = cfg or settings
    return {
        "moment_degree_cap": cfg.MOMENT_DEGREE_CAP,
        "partition_max_vars": cfg.PARTITION_MAX_VARS,
        "support_budget": cfg.SUPPORT_BUDGET,
        "basis_budget": cfg.BASIS_BUDGET,
        "sw_enum_budget": cfg.SW_ENUM_BUDGET,
        "hermite_weight_budget": cfg.HERMITE_WEIGHT_BUDGET,
        "quenched_enum_budget": cfg.QUENCHED_ENUM_BUDGET,
        "quenched_stratum_exact": cfg.QUENCHED_STRATUM_EXACT,
        "quenched_stratum_samples": cfg.QUENCHED_STRATUM_SAMPLES,
        "gamma_enum_budget": cfg.GAMMA_ENUM_BUDGET,
        "pinv_cutoff": cfg.PINV_CUTOFF,
    }
