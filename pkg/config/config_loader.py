"""
Universal configuration loader with caching.

Usage:
    from config.config_loader import get

    # Get nested value using dot notation
    k = get("normalizers", "unmix.k")
    delta = get("streams", "stream.delta")

    # Get entire section
    domains = get("streams", "domains")
"""

import os
import yaml
from typing import Any
from pathlib import Path


# Cache for loaded configs
_cache: dict[str, dict] = {}


def get(file: str, key: str = None, default: Any = None) -> Any:
    """
    Get configuration value from YAML file.

    Args:
        file: Config file name without extension (e.g., "normalizers", "streams")
        key: Dot-notation path to value (e.g., "unmix.tau")
             If None, returns entire config
        default: Default value if key not found

    Returns:
        Configuration value, entire config dict, or default

    Examples:
        >>> get("normalizers", "unmix.tau")
        0.07
        >>> get("normalizers", "momentum.b0")
        64
        >>> get("training", "arch.hidden")
        [32, 32]
    """
    if file not in _cache:
        try:
            _cache[file] = _load_config(file)
        except FileNotFoundError:
            return default

    config = _cache[file]

    if key is None:
        return config

    parts = key.split(".")
    value = config

    try:
        for part in parts:
            value = value[part]
        return value
    except (KeyError, TypeError):
        return default


def _load_config(file: str) -> dict:
    """Load YAML config file from the config directory."""
    config_dir = Path(__file__).parent
    config_path = config_dir / f"{file}.yaml"

    if not config_path.exists():
        raise FileNotFoundError(f"Config file not found: {config_path}")

    with open(config_path, "r", encoding="utf-8") as f:
        return yaml.safe_load(f) or {}


def load_file(path: str) -> dict:
    """
    Load a user-supplied flat key-value YAML file (experiment config or preset).

    Keys may be written with dashes (mirroring CLI flags) or underscores;
    they are normalized to underscores.

    Raises:
        FileNotFoundError: if the file does not exist
        ValueError: if the file does not contain a mapping
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Config file not found: {path}")

    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}

    if not isinstance(data, dict):
        raise ValueError(f"Config file {path} must contain key: value pairs, got {type(data).__name__}")

    return {str(k).replace("-", "_"): v for k, v in data.items()}


def load_preset(name: str) -> dict:
    """
    Load an experiment preset from config/presets/.

    Args:
        name: Preset name (e.g., "correlated", "strongly_correlated", "iid")

    Returns:
        Flat dictionary of experiment settings (descriptive keys removed)
    """
    preset_path = Path(__file__).parent / "presets" / f"{name}.yaml"

    if not preset_path.exists():
        raise FileNotFoundError(f"Preset '{name}' not found at {preset_path}")

    preset = load_file(str(preset_path))
    preset.pop("name", None)
    preset.pop("description", None)
    return preset


def list_presets() -> list[str]:
    """Names of all presets shipped in config/presets/."""
    presets_dir = Path(__file__).parent / "presets"
    return sorted(p.stem for p in presets_dir.glob("*.yaml"))


def reload(file: str = None):
    """
    Reload configuration from disk.

    Args:
        file: Config file to reload. If None, reloads all cached configs.
    """
    if file is None:
        _cache.clear()
    elif file in _cache:
        del _cache[file]


def get_path(file: str, key: str) -> str:
    """
    Get a path from config and resolve it to absolute path.

    Args:
        file: Config file name
        key: Dot-notation path to path value

    Returns:
        Absolute path as string
    """
    path = get(file, key)

    if os.path.isabs(path):
        return path

    # Resolve relative to project root (parent of config dir)
    project_root = Path(__file__).parent.parent
    return str(project_root / path)
