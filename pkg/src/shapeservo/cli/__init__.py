"""Command-line orchestration: config, profiles, pipeline stages."""

from .config import CONFIG_SCHEMA, config_hash, load_config, write_manifest
from .profiles import PROFILES

__all__ = ["CONFIG_SCHEMA", "PROFILES", "config_hash", "load_config", "write_manifest"]
