"""
Configuration value validators.

Every validator raises ConfigurationError naming the offending field.
"""

from typing import Any, Sequence

from lincrack.core.exceptions import ConfigurationError


def validate_positive_int(value: Any, name: str) -> None:
    """Validate that a value is a positive integer."""
    if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
        raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")


def validate_non_negative_int(value: Any, name: str) -> None:
    """Validate that a value is an integer ≥ 0."""
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ConfigurationError(f"{name} must be a non-negative integer, got {value!r}")


def validate_positive_float(value: Any, name: str) -> None:
    """Validate that a value is a number > 0."""
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        raise ConfigurationError(f"{name} must be a positive number, got {value!r}")


def validate_probability(value: Any, name: str) -> None:
    """Validate that a value is a valid probability (0.0 to 1.0)."""
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not 0 <= value <= 1:
        raise ConfigurationError(f"{name} must be a float between 0.0 and 1.0, got {value!r}")


def validate_size(value: Any, name: str) -> tuple:
    """Validate a (height, width) pair of positive integers and return it as a tuple."""
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigurationError(f"{name} must be a (height, width) pair, got {value!r}")
    for v in value:
        validate_positive_int(v, name)
    return (value[0], value[1])


def validate_positive_ints(values: Any, name: str, allow_empty: bool = False) -> tuple:
    """Validate a sequence of positive integers and return it as a tuple."""
    if not isinstance(values, (list, tuple)) or (not values and not allow_empty):
        raise ConfigurationError(f"{name} must be a non-empty sequence of integers, got {values!r}")
    for v in values:
        validate_positive_int(v, name)
    return tuple(values)


def validate_choice(value: Any, name: str, choices: Sequence[Any]) -> None:
    """Validate that a value is one of ``choices``."""
    if value not in choices:
        raise ConfigurationError(f"{name} must be one of {list(choices)}, got {value!r}")
