"""Process settings using pydantic-settings."""

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Settings loaded from environment variables (prefix ``ACEDG_``)."""

    # Worker threads for independent benchmark cells
    NUM_THREADS: int = Field(1, ge=1)

    model_config = SettingsConfigDict(
        env_prefix="ACEDG_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


settings = Settings()
