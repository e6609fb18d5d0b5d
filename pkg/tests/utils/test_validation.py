"""
Tests for configuration value validators.
"""

import pytest

from lincrack.core.exceptions import ConfigurationError
from lincrack.utils.validation import (
    validate_choice,
    validate_non_negative_int,
    validate_positive_float,
    validate_positive_int,
    validate_positive_ints,
    validate_probability,
    validate_size,
)


@pytest.mark.parametrize("validator, good, bad", [
    (validate_positive_int, [1, 512], [0, -1, 1.0, True, "3", None]),
    (validate_non_negative_int, [0, 7], [-1, 0.0, False]),
    (validate_positive_float, [1e-12, 3, 0.5], [0, -0.1, True, float('nan'), "1"]),
    (validate_probability, [0, 1, 0.5, 1.0], [-0.01, 1.01, True, "0.5", float('nan')]),
])
def test_scalar_validators(validator, good, bad):
    for value in good:
        validator(value, 'field')
    for value in bad:
        with pytest.raises(ConfigurationError, match='field'):
            validator(value, 'field')


class TestSize:
    def test_list_becomes_tuple(self):
        assert validate_size([512, 256], 'input_size') == (512, 256)

    @pytest.mark.parametrize("value", [(512,), (1, 2, 3), "512x512", (0, 4), (4.0, 4), None])
    def test_invalid(self, value):
        with pytest.raises(ConfigurationError):
            validate_size(value, 'input_size')


class TestPositiveInts:
    def test_tuple_returned(self):
        assert validate_positive_ints([6, 12, 24], 'block_sizes') == (6, 12, 24)

    def test_empty(self):
        assert validate_positive_ints([], 'rates', allow_empty=True) == ()
        with pytest.raises(ConfigurationError):
            validate_positive_ints([], 'rates')

    @pytest.mark.parametrize("value", [[6, 0], [6, 'x'], 6, "6,12"])
    def test_invalid(self, value):
        with pytest.raises(ConfigurationError):
            validate_positive_ints(value, 'rates')


def test_choice():
    validate_choice('mean', 'reduction', ('mean', 'sum'))
    with pytest.raises(ConfigurationError, match='reduction'):
        validate_choice('max', 'reduction', ('mean', 'sum'))
