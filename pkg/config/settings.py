"""Global project configuration values."""

from pathlib import Path

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Where train/eval/ablate write metrics.json, checkpoints and CSV tables
    output_dir: Path = Path("runs")
    # gen-data writes sequence files and manifests here
    data_dir: Path = Path("data/synthetic")
    log_level: str = "INFO"
    progress_bar: bool = True

    class Config:
        env_prefix = "DSLNET_"
        env_file = ".env"
        env_file_encoding = "utf-8"


settings = Settings()
