"""
Convolution parameters.
"""

from dataclasses import dataclass
from typing import Any, Dict, Tuple, Union

from lincrack.core.exceptions import ConfigurationError, ShapeError

IntPair = Tuple[int, int]


def as_pair(value: Union[int, Tuple[int, int], list], name: str) -> IntPair:
    """Normalize an int or a 2-sequence of ints to a pair."""
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigurationError(f"{name} must be an int or a pair, got {value!r}")
        pair = (value[0], value[1])
    else:
        pair = (value, value)
    for v in pair:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigurationError(f"{name} must hold integers, got {value!r}")
    return pair


def output_extent(size: int, kernel: int, stride: int, padding: int, dilation: int = 1) -> int:
    """floor((size + 2·pad − dilation·(k−1) − 1) / stride) + 1"""
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


@dataclass(frozen=True)
class ConvParams:
    """Stride, zero-padding, dilation and groups of a 2-D convolution.

    Scalars are expanded to (height, width) pairs.

    Raises:
        ConfigurationError: If a value is outside its valid range
    """
    stride: IntPair = (1, 1)
    padding: IntPair = (0, 0)
    dilation: IntPair = (1, 1)
    groups: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'stride', as_pair(self.stride, 'stride'))
        object.__setattr__(self, 'padding', as_pair(self.padding, 'padding'))
        object.__setattr__(self, 'dilation', as_pair(self.dilation, 'dilation'))

        if min(self.stride) <= 0:
            raise ConfigurationError(f"stride must be positive, got {self.stride}")
        if min(self.padding) < 0:
            raise ConfigurationError(f"padding must be non-negative, got {self.padding}")
        if min(self.dilation) <= 0:
            raise ConfigurationError(f"dilation must be positive, got {self.dilation}")
        if isinstance(self.groups, bool) or not isinstance(self.groups, int) or self.groups <= 0:
            raise ConfigurationError(f"groups must be a positive integer, got {self.groups}")

    def output_size(self, height: int, width: int, kernel_h: int, kernel_w: int) -> IntPair:
        """Output spatial extent for an input and kernel size.

        Raises:
            ShapeError: If an output extent would be smaller than 1
        """
        out_h = output_extent(height, kernel_h, self.stride[0], self.padding[0], self.dilation[0])
        out_w = output_extent(width, kernel_w, self.stride[1], self.padding[1], self.dilation[1])
        if out_h < 1 or out_w < 1:
            raise ShapeError(
                f"convolution output would be {out_h}x{out_w} for input {height}x{width}, "
                f"kernel {kernel_h}x{kernel_w}, {self}"
            )
        return out_h, out_w

    def to_dict(self) -> Dict[str, Any]:
        return {
            'stride': list(self.stride),
            'padding': list(self.padding),
            'dilation': list(self.dilation),
            'groups': self.groups,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ConvParams':
        return cls(
            stride=data.get('stride', 1),
            padding=data.get('padding', 0),
            dilation=data.get('dilation', 1),
            groups=data.get('groups', 1),
        )
