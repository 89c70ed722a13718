"""
Configuration settings for the application.
Loads environment variables and provides numerical defaults.
"""
from pydantic_settings import BaseSettings
from functools import lru_cache


class Settings(BaseSettings):
    """
    Application settings loaded from environment variables.

    Attributes:
        APP_NAME: Name of the application
        LOG_LEVEL: Root log level used when no logging ini file is found
        LOGGING_CONFIG: Path of the logging ini file
        CONDITION_CAP: Largest condition number accepted when inverting an MSE matrix
        PSD_TOLERANCE: Relative (times trace) tolerance for positive semidefinite checks
        BOOT_N: Default number of bootstrap samples
        BOOT_SEED: Default bootstrap seed
        BOOT_RETRIES: Retries for a bootstrap sample whose fit fails
        N_JOBS: Worker count for bootstrap and replication loops
        GRID_NX: Pixel columns of intensity fields
        GRID_NY: Pixel rows of intensity fields
        RASTER_RESOLUTION: Rasterization resolution for Boolean area fractions
        DPP_TAIL_MASS: Spectral mass allowed outside the DPP Fourier truncation
        DPP_MAX_MODES: Number of Fourier modes above which the truncation is rejected
        FAILURE_THRESHOLD: Failed-replication fraction above which a study aborts
    """
    APP_NAME: str = "Estimator Averaging"
    LOG_LEVEL: str = "INFO"
    LOGGING_CONFIG: str = "logging.ini"
    CONDITION_CAP: float = 1e12
    PSD_TOLERANCE: float = 1e-10
    BOOT_N: int = 100
    BOOT_SEED: int = 20240601
    BOOT_RETRIES: int = 3
    N_JOBS: int = 1
    GRID_NX: int = 128
    GRID_NY: int = 128
    RASTER_RESOLUTION: int = 1024
    DPP_TAIL_MASS: float = 1e-3
    DPP_MAX_MODES: int = 250000
    FAILURE_THRESHOLD: float = 0.01

    class Config:
        env_file = ".env"
        case_sensitive = True

@lru_cache()
def get_settings() -> Settings:
    """
    Get cached settings instance.

    Returns:
        Settings: Application settings
    """
    return Settings()


# Create a global settings instance
settings = get_settings()
