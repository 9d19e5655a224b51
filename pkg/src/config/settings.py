"""Configuration settings for the fairwatch toolkit."""

from typing import Literal

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from ..models.network import TrainConfig


class Settings(BaseSettings):
    """Toolkit defaults loaded from FAIRWATCH_* environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="FAIRWATCH_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Logging Configuration
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = Field(
        default="INFO"
    )
    log_format: Literal["json", "text"] = Field(default="text")
    quiet: bool = Field(default=False)

    # Network / Training Defaults
    default_hidden_width: int = Field(default=32, ge=1)
    learning_rate: float = Field(default=0.001)
    epochs: int = Field(default=40, ge=1)
    batch_size: int = Field(default=32, ge=1)

    # Monitor Defaults
    k_sigma: float = Field(default=3.0)
    top_k: int = Field(default=5)
    monitor_batch_size: int = Field(default=256, ge=1)

    # Experiment Execution
    workers: int = Field(default=1)
    output_dir: str = Field(default="./runs")

    @field_validator("learning_rate")
    @classmethod
    def validate_learning_rate(cls, v: float) -> float:
        """Learning rate must be strictly positive."""
        if v <= 0:
            raise ValueError("learning_rate must be > 0")
        return v

    @field_validator("k_sigma")
    @classmethod
    def validate_k_sigma(cls, v: float) -> float:
        """Alarm width is a non-negative multiple of the baseline std."""
        if v < 0:
            raise ValueError("k_sigma must be >= 0")
        return v

    @field_validator("top_k")
    @classmethod
    def validate_top_k(cls, v: int) -> int:
        if v < 0:
            raise ValueError("top_k must be >= 0")
        return v

    @field_validator("workers")
    @classmethod
    def validate_workers(cls, v: int) -> int:
        if v < 1:
            raise ValueError("workers must be >= 1")
        return v

    @property
    def is_quiet(self) -> bool:
        """Quiet runs only log warnings and errors."""
        return self.quiet or self.log_level in ("WARNING", "ERROR", "CRITICAL")

    def default_train_config(self, shuffle_seed: int = 0) -> TrainConfig:
        """Build a TrainConfig from the configured defaults."""
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            shuffle_seed=shuffle_seed,
        )


# Global settings instance
settings = Settings()
