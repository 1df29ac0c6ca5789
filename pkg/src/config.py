from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional

from dotenv import load_dotenv
from loguru import logger

from src.errors import ConfigError


@dataclass
class RuntimeConfig:
    """Process-level settings shared by every command."""

    output_dir: Optional[str] = None  # overrides the config file's output_dir
    threads: int = 1
    seed: Optional[int] = None  # overrides the config file's seed


@dataclass
class AppConfig:
    """Main application configuration."""

    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)
    log_level: str = "INFO"


def _int_env(name: str, default: Optional[int]) -> Optional[int]:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError("{} must be an integer, got {!r}".format(name, raw)) from exc


def load_config() -> AppConfig:
    """Load configuration from environment variables and .env file.

    Environment variable mapping (all optional, defaults used if not set):
    - ESN_OUTPUT_DIR: output directory for run/bounds/synth
    - ESN_THREADS: worker pool size
    - ESN_SEED: master seed override
    - LOG_LEVEL

    Returns:
        AppConfig: Loaded configuration with all settings.

    Raises:
        ConfigError: If a numeric variable does not parse or threads < 1.
    """
    load_dotenv()

    runtime = RuntimeConfig(
        output_dir=os.getenv("ESN_OUTPUT_DIR") or None,
        threads=_int_env("ESN_THREADS", 1),
        seed=_int_env("ESN_SEED", None),
    )
    if runtime.threads < 1:
        raise ConfigError("ESN_THREADS must be >= 1, got {}".format(runtime.threads))

    config = AppConfig(runtime=runtime, log_level=os.getenv("LOG_LEVEL", "INFO"))

    logger.debug("Configuration loaded:")
    logger.debug("  output_dir: {}", config.runtime.output_dir or "(from config file)")
    logger.debug("  threads: {}", config.runtime.threads)
    logger.debug("  seed: {}", config.runtime.seed if config.runtime.seed is not None else "(from config file)")
    logger.debug("  log_level: {}", config.log_level)

    return config
