"""Configuration management for the trusted pre-processing workflows."""

from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )

    # Application settings
    log_level: str = "INFO"

    # Constraint-system backend
    cs_value_bits: int = 16  # signed range of values/thresholds inside the CS

    # Cost weights of the chain simulator (gas-like units)
    cost_signature_verify: int = 5000
    cost_hash_base: int = 60
    cost_hash_word: int = 12  # per 32-byte word
    cost_constraint_check: int = 2  # per constraint
    cost_calldata_byte: int = 16
    gas_limit: Optional[int] = None  # per transaction, None = unlimited

    # Reference program defaults
    default_threshold: int = 50
    default_scale_divisor: int = 10

    # Orchestration
    max_parallel_batches: int = 4
    bench_repetitions: int = 3


# Global settings instance
settings = Settings()
