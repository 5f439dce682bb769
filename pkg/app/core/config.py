"""
Configuration module for the AirReComp simulator

This module uses pydantic-settings' BaseSettings to manage runtime configuration
(logging, parallelism, data locations) from environment variables with sensible
defaults. Experiment parameters live in app.models.experiment and are loaded
from a config file per run.

Environment variables take precedence over values read from `.env`.
"""

import logging
from functools import lru_cache
from typing import Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Runtime settings loaded from environment variables with defaults."""

    model_config = SettingsConfigDict(
        env_prefix="AIRRECOMP_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )

    # Application settings
    APP_NAME: str = "AirReComp Simulator"
    LOG_LEVEL: str = Field(default="INFO")

    # Trial execution
    WORKERS: int = Field(default=1, ge=1)
    TRIAL_CHUNK_SIZE: int = Field(default=500, ge=1)

    # Locations
    MNIST_DIR: Optional[str] = Field(default=None)

    @field_validator("LOG_LEVEL")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate that the log level is a standard logging level name."""
        level = v.upper()
        if level not in getattr(logging, "getLevelNamesMapping", lambda: dict(logging._nameToLevel))():
            raise ValueError(f"LOG_LEVEL must be a logging level name, got {v!r}")
        return level


@lru_cache()
def get_settings() -> Settings:
    """
    Create and cache a Settings instance.

    Returns:
        Settings: Runtime settings
    """
    return Settings()


# Create a settings instance for importing
settings = get_settings()
