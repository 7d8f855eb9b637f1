"""Configuration management for the SDQKD network emulator."""

from typing import Optional
from pydantic import Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    # Application Configuration
    app_name: str = Field(default="SDQKD Network Emulator")
    app_version: str = Field(default="1.0.0")
    environment: str = Field(default="development")
    debug: bool = Field(default=False)

    # API Configuration (networked mode)
    api_host: str = Field(default="127.0.0.1")
    api_port: int = Field(default=8000)
    api_prefix: str = Field(default="/api/v1")
    scenario_path: Optional[str] = Field(
        default=None, description="Scenario file served in networked mode; built-in Madrid when unset")

    # Simulation defaults
    default_seed: int = Field(default=0)
    block_size_bits: int = Field(
        default=256, description="Size of one synchronized key block")
    slot_seconds: float = Field(
        default=0.1, description="Generation tick / scheduling granularity")
    calibration_fraction: float = Field(
        default=0.5, description="Fraction of time a receiver spends calibrating")
    low_watermark_bits: int = Field(default=4096)
    directive_memo_size: int = Field(
        default=1024, description="Directive ids remembered for replay detection")
    provision_interval_s: float = Field(default=1.0)

    # Physical layer
    attenuation_db_per_km: float = Field(default=0.2)
    max_loss_db: float = Field(default=30.0)
    channel_penalty_db: float = Field(
        default=0.0, description="Extra loss per co-propagating classical channel")
    grid_slots: int = Field(default=40)

    # Relay
    auth_overhead_bits_per_hop: int = Field(default=0)

    # Logging Configuration
    log_level: str = Field(
        default="INFO", description="Logging level (DEBUG, INFO, WARNING, ERROR)")
    log_to_file: bool = Field(default=True)
    log_dir: str = Field(default="logs")

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = False


# Global settings instance
settings = Settings()
