"""
lincrack Exceptions

This module defines the exception hierarchy shared by every lincrack package.
"""


class LinCrackError(Exception):
    """Base exception for lincrack"""
    pass


class ConfigurationError(LinCrackError, ValueError):
    """Raised when a configuration value is invalid."""
    pass


# Tensor core

class TensorError(LinCrackError):
    """Base exception for tensor operations."""
    pass


class ShapeError(TensorError, ValueError):
    """Raised when operand shapes are incompatible with an operation."""
    pass


class NonFiniteError(TensorError, ArithmeticError):
    """Raised in debug mode when an operation produces NaN or Inf."""
    pass


class GraphError(TensorError, RuntimeError):
    """Raised when backward is called on an invalid or consumed graph."""
    pass


# Models

class ModelError(LinCrackError):
    """Base exception for model construction and evaluation."""
    pass


class UnknownTapError(ModelError, KeyError):
    """Raised when a tap or layer name does not exist in a model graph."""

    def __str__(self) -> str:
        # KeyError quotes its argument; keep the plain message
        return str(self.args[0]) if self.args else ""


class InputSizeError(ModelError, ValueError):
    """Raised when an image does not match the model input size."""
    pass


# Data

class DataError(LinCrackError):
    """Base exception for dataset and file handling."""
    pass


class ImageLoadError(DataError):
    """Raised when an image or mask file cannot be decoded."""
    pass


class ImageWriteError(DataError):
    """Raised when a mask, heatmap or overlay file cannot be written."""
    pass


class SplitError(DataError, ValueError):
    """Raised when a dataset cannot be split as requested."""
    pass


class WeightBundleError(DataError):
    """Raised when a weight bundle is malformed, truncated or incompatible."""
    pass


class ShapeMismatchError(WeightBundleError):
    """Raised when bundle tensors do not match the model parameters."""
    pass


# Pipeline

class PipelineError(LinCrackError):
    """Base exception for pipeline orchestration."""
    pass


class MissingWeightsError(PipelineError, FileNotFoundError):
    """Raised when a configured weight bundle does not exist."""
    pass


class TrainingDivergedError(PipelineError):
    """Raised when the training loss becomes NaN or infinite."""
    pass
