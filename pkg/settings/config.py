from pydantic_settings import BaseSettings, SettingsConfigDict
from functools import lru_cache
from pydantic import Field


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="WISP_", extra="ignore")

    LOG_LEVEL: str = Field(default="INFO", description="Log level")
    DEFAULT_SEED: int = Field(default=20240601, description="Global seed used when a command gets none")
    OUTPUT_DIR: str = Field(default="runs", description="Default output directory")
    APP_VERSION: str = Field(default="0.1.0", description="Version stamped into artifact metadata")

    # sweep parallelism
    PREFECT_TASK_WORKERS: int = Field(default=4, ge=1, description="Thread pool size for sweep tasks")


@lru_cache
def get_settings() -> Settings:
    return Settings()


settings: Settings = get_settings()
