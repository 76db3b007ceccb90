from typing import Optional
from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import field_validator
from functools import lru_cache


class Settings(BaseSettings):
    model_config = SettingsConfigDict(extra="ignore", env_file=".env", env_prefix="CPCANET_", case_sensitive=False)

    # App settings
    app_name: str = "CPCANet toolkit"
    app_version: str = "0.1.0"

    # Logging
    log_level: str = "INFO"
    log_format: str = "json"

    # Runs
    output_dir: str = "runs"
    default_seed: int = 0
    sweep_workers: int = 1

    # Negative control for the gradient oracle: name of a tape primitive whose
    # adjoint gets corrupted when gradcheck builds its graphs.
    corrupt_adjoint: Optional[str] = None

    @field_validator("log_level", mode="before")
    @classmethod
    def normalize_log_level(cls, v: str) -> str:
        level = str(v).upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"unknown log level {v!r}")
        return level

    @field_validator("log_format")
    @classmethod
    def check_log_format(cls, v: str) -> str:
        if v not in {"json", "console"}:
            raise ValueError("log_format must be 'json' or 'console'")
        return v

    @field_validator("sweep_workers")
    @classmethod
    def check_workers(cls, v: int) -> int:
        if v < 1:
            raise ValueError("sweep_workers must be at least 1")
        return v


@lru_cache()
def get_settings() -> Settings:
    return Settings()
