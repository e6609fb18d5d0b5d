"""
Configuration management for lincrack.

YAML-backed configuration with dotted-key access, deep-merged defaults and
command-line overrides of the form ``dotted.key=value``.
"""

import copy
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, TypeVar, Type

import yaml

from lincrack.core.exceptions import ConfigurationError

T = TypeVar('T', bound='ConfigManager')


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Return ``base`` updated recursively with ``override`` (inputs untouched)."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_override(item: str) -> tuple[str, Any]:
    """
    Parse a ``key=value`` override; the value is read as a YAML scalar.

    Raises:
        ConfigurationError: If the item has no ``=`` or an empty key
    """
    if '=' not in item:
        raise ConfigurationError(f"override must look like key=value, got {item!r}")
    key, raw = item.split('=', 1)
    key = key.strip()
    if not key:
        raise ConfigurationError(f"override has an empty key: {item!r}")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError:
        value = raw
    return key, value


class ConfigManager:
    """
    Manage configuration settings stored in a YAML file.

    Values are looked up with dot-separated keys (``segmenter.weights``);
    missing keys fall back to the defaults the manager was created with.
    """

    def __init__(self, config_path: Optional[str] = None, defaults: Optional[Dict[str, Any]] = None):
        """
        Initialize the ConfigManager.

        Args:
            config_path: Path to a YAML configuration file. If None, only
                defaults are used.
            defaults: Default configuration values.
        """
        self.defaults = defaults or {}
        self.config_path = Path(config_path) if config_path else None
        self._data: Dict[str, Any] = {}
        self.load()

    def load(self) -> None:
        """Load configuration from file, merged over the defaults."""
        data: Dict[str, Any] = {}
        if self.config_path is not None:
            if not self.config_path.exists():
                raise ConfigurationError(f"config file not found: {self.config_path}")
            try:
                with open(self.config_path, 'r', encoding='utf-8') as f:
                    data = yaml.safe_load(f) or {}
            except (yaml.YAMLError, OSError) as e:
                raise ConfigurationError(f"cannot read config {self.config_path}: {e}") from e
            if not isinstance(data, dict):
                raise ConfigurationError(f"config root must be a mapping: {self.config_path}")
        self._data = deep_merge(self.defaults, data)

    def save(self, path: Optional[str] = None) -> Path:
        """Save configuration to a YAML file."""
        target = Path(path) if path else self.config_path
        if target is None:
            raise ConfigurationError("no path to save configuration to")
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            with open(target, 'w', encoding='utf-8') as f:
                yaml.safe_dump(self._data, f, sort_keys=False)
        except OSError as e:
            raise ConfigurationError(f"failed to save config to {target}: {e}") from e
        return target

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get a configuration value by key.

        Args:
            key: Dot-separated key path (e.g., 'segmenter.weights')
            default: Value returned if the key is not found

        Returns:
            The configuration value or default if not found
        """
        value: Any = self._data
        try:
            for k in key.split('.'):
                value = value[k]
            return value
        except (KeyError, TypeError):
            return default

    def set(self, key: str, value: Any) -> None:
        """
        Set a configuration value.

        Args:
            key: Dot-separated key path
            value: Value to set
        """
        keys = key.split('.')
        d = self._data

        for k in keys[:-1]:
            if k not in d or not isinstance(d[k], dict):
                d[k] = {}
            d = d[k]

        d[keys[-1]] = value

    def apply_overrides(self, overrides: Iterable[str]) -> None:
        """Apply ``key=value`` overrides (e.g. from ``--set`` flags)."""
        for item in overrides:
            key, value = parse_override(item)
            self.set(key, value)

    def to_dict(self) -> Dict[str, Any]:
        """Return the configuration as a dictionary."""
        return copy.deepcopy(self._data)

    @classmethod
    def from_dict(cls: Type[T], data: Dict[str, Any], defaults: Optional[Dict[str, Any]] = None) -> T:
        """
        Create a ConfigManager from a dictionary.

        Args:
            data: Configuration data
            defaults: Defaults the data is merged over

        Returns:
            A new ConfigManager instance
        """
        instance = cls(config_path=None, defaults=defaults or {})
        instance._data = deep_merge(instance._data, data)
        return instance
