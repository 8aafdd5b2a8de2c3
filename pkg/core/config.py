"""YAML configuration loading with environment overrides."""
import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from core.errors import ConfigError

ENV_PREFIX = "MRA_"


def _expand(value: Any) -> Any:
    # ${VAR} references are resolved from the environment
    if isinstance(value, str) and value.startswith("${") and value.endswith("}"):
        env_var = value[2:-1]
        resolved = os.environ.get(env_var)
        if resolved is None:
            raise ConfigError(f"Environment variable {env_var} not set", key=value)
        return yaml.safe_load(resolved)
    return value


def load_config(path: Optional[Path] = None,
                defaults: Optional[Dict[str, Any]] = None,
                env_prefix: str = ENV_PREFIX) -> Dict[str, Any]:
    """Merge defaults, the YAML (or JSON) file at `path`, then MRA_<KEY> variables.

    Environment values are parsed as YAML scalars, so MRA_MAX_ITERS=200
    arrives as an int.
    """
    config: Dict[str, Any] = dict(defaults or {})

    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                loaded = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Invalid config file {path}: {e}")
        if not isinstance(loaded, dict):
            raise ConfigError(f"Config file {path} must hold a mapping")
        config.update(loaded)

    for key in list(config):
        env_value = os.environ.get(f"{env_prefix}{key.upper()}")
        if env_value is not None:
            config[key] = yaml.safe_load(env_value)
        else:
            config[key] = _expand(config[key])

    return config


def module_config(package_file: str, defaults: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Load the config.yaml that sits next to a module's source file."""
    path = Path(package_file).parent / "config.yaml"
    return load_config(path if path.exists() else None, defaults)
