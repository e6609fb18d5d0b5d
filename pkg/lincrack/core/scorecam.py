"""
lincrack Score-CAM

Score-weighted class activation maps. Each channel of a tapped activation is
upsampled and min-max normalized into a mask; the mask's weight is how much
the class score rises when the image is multiplied by it, relative to an
all-zero baseline. The heatmap is the ReLU of the weighted channel sum.
"""

import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from matplotlib import colormaps
from PIL import Image, ImageFilter

from lincrack.core.exceptions import ConfigurationError, ImageWriteError, NonFiniteError, ShapeError
from lincrack.core.models import ModelGraph, forward_with_taps
from lincrack.core.tensor import Tensor, bilinear_resize, no_grad, softmax
from lincrack.utils.concurrency import ordered_map
from lincrack.utils.logger import get_logger
from lincrack.utils.validation import (
    validate_choice,
    validate_non_negative_int,
    validate_positive_int,
    validate_probability,
)

logger = get_logger(__name__)

REDUCTIONS = ('mean', 'sum', 'region')
HEATMAP_STATES = ('raw', 'unit-max')


# 256 RGB entries in [0, 1]: dark blue at 0 through cyan and yellow to dark red at 1
COLORMAP = colormaps["jet"](np.linspace(0.0, 1.0, 256))[:, :3]


@dataclass(frozen=True)
class ChannelWeight:
    """Score-CAM weight of one activation channel."""
    channel: int
    weight: float

    def __post_init__(self):
        if not np.isfinite(self.weight):
            raise NonFiniteError(f"channel {self.channel} weight is not finite: {self.weight}")


@dataclass
class Heatmap:
    """A nonnegative H×W class activation map.

    Args:
        values: H×W map, every value ≥ 0
        layer: Tap the activations came from
        class_index: Class of interest
        state: 'raw' or 'unit-max' (max value 1 unless all-zero)
        weights: Channel weights that produced the map
    """
    values: np.ndarray
    layer: str
    class_index: int
    state: str = 'raw'
    weights: List[ChannelWeight] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeError(f"heatmap values must be H×W, got shape {self.values.shape}")
        if np.any(self.values < 0):
            raise ShapeError("heatmap values must be nonnegative")
        validate_choice(self.state, 'state', HEATMAP_STATES)

    @property
    def shape(self):
        return self.values.shape

    def unit_max(self) -> 'Heatmap':
        peak = self.values.max()
        values = self.values / peak if peak > 0 else np.zeros_like(self.values)
        return Heatmap(values, self.layer, self.class_index, 'unit-max', list(self.weights))

    def resized(self, height: int, width: int) -> 'Heatmap':
        """Bilinear resize; the normalization state is kept."""
        if self.values.shape == (height, width):
            return Heatmap(self.values.copy(), self.layer, self.class_index, self.state, list(self.weights))
        with no_grad():
            values = bilinear_resize(Tensor(self.values[np.newaxis, np.newaxis]), height, width).data[0, 0]
        values = np.maximum(values, 0.0)
        if self.state == 'unit-max' and values.max() > 0:
            values = values / values.max()
        return Heatmap(values, self.layer, self.class_index, self.state, list(self.weights))

    def to_uint8(self) -> np.ndarray:
        """Unit-max values scaled to 0..255."""
        values = self.values if self.state == 'unit-max' else self.unit_max().values
        return np.round(values * 255.0).astype(np.uint8)


def _spatial(channel: Union[Tensor, np.ndarray]) -> np.ndarray:
    data = channel.data if isinstance(channel, Tensor) else np.asarray(channel, dtype=np.float64)
    if data.ndim < 2 or any(extent != 1 for extent in data.shape[:-2]):
        raise ShapeError(f"expected a single-channel spatial tensor, got shape {data.shape}")
    return data.reshape(data.shape[-2:])


def normalize_mask(activation_channel: Union[Tensor, np.ndarray], target_h: int, target_w: int) -> Tensor:
    """
    Upsample one activation channel to the image size and scale it to [0, 1].

    A constant channel yields an all-zero mask.
    """
    data = _spatial(activation_channel)
    if data.shape != (target_h, target_w):
        with no_grad():
            data = bilinear_resize(Tensor(data[np.newaxis, np.newaxis]), target_h, target_w).data[0, 0]
    lo, hi = data.min(), data.max()
    if hi == lo:
        return Tensor(np.zeros((target_h, target_w)))
    return Tensor((data - lo) / (hi - lo))


def _single_image(image: Tensor) -> np.ndarray:
    data = image.data
    if data.ndim == 3:
        data = data[np.newaxis]
    if data.ndim != 4 or data.shape[0] != 1:
        raise ShapeError(f"expected one C×H×W image, got shape {image.shape}")
    return data


def class_scores(
    model: ModelGraph,
    images: np.ndarray,
    class_index: int,
    reduction: str = 'mean',
    region: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Scalar softmax score of ``class_index`` for each image of a batch.

    Classifier outputs give the class probability directly. Segmenter maps
    are reduced over pixels: ``mean`` (default), ``sum``, or ``region``
    (mean over the pixels of a ground-truth mask).
    """
    with no_grad():
        probs = softmax(model.forward(Tensor(images)), axis=1).data[:, class_index]
    if probs.ndim == 1:
        return probs
    if reduction == 'mean':
        return probs.mean(axis=(1, 2))
    if reduction == 'sum':
        return probs.sum(axis=(1, 2))
    return (probs * region).sum(axis=(1, 2)) / region.sum()


def cic_weight(
    model: ModelGraph,
    image: Tensor,
    mask: Union[Tensor, np.ndarray],
    class_index: int,
    reduction: str = 'mean',
    region: Optional[np.ndarray] = None,
) -> float:
    """
    Increase of the class score when the image is multiplied by ``mask``.

    Returns f_c(image ⊙ mask) − f_c(0), the mask applied to every channel.

    Raises:
        ShapeError: If the mask size differs from the image size
    """
    data = _single_image(image)
    mask = _spatial(mask)
    if mask.shape != data.shape[2:]:
        raise ShapeError(f"mask shape {mask.shape} does not match image size {data.shape[2:]}")
    masked = class_scores(model, data * mask, class_index, reduction, region)[0]
    baseline = class_scores(model, np.zeros_like(data), class_index, reduction, region)[0]
    return float(masked - baseline)


def weighted_activation_sum(activations: np.ndarray, weights: Sequence[float]) -> np.ndarray:
    """ReLU(Σ_k weights[k]·activations[k]) for K×h×w activations."""
    activations = np.asarray(activations, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if activations.ndim != 3 or weights.shape != (activations.shape[0],):
        raise ShapeError(f"need K×h×w activations and K weights, got {activations.shape} and {weights.shape}")
    return np.maximum(np.tensordot(weights, activations, axes=1), 0.0)


class ScoreCAM:
    """
    Score-CAM engine bound to one model.

    ``forward_passes`` counts the images the model evaluates: a heatmap over
    K channels costs K + 2 (the tapped forward, the baseline, K masked
    images) however the masked images are batched.
    """

    def __init__(
        self,
        model: ModelGraph,
        reduction: str = 'mean',
        region: Optional[np.ndarray] = None,
        batch_size: int = 16,
        workers: int = 1,
    ):
        validate_choice(reduction, 'reduction', REDUCTIONS)
        validate_positive_int(batch_size, 'batch_size')
        validate_positive_int(workers, 'workers')
        if reduction == 'region':
            if region is None:
                raise ConfigurationError("reduction 'region' needs a region mask")
            region = np.asarray(region, dtype=np.float64)
            if region.shape != tuple(model.input_size):
                raise ConfigurationError(f"region shape {region.shape} must equal input size {model.input_size}")
            if region.sum() <= 0:
                raise ConfigurationError("region mask is empty")
        self.model = model
        self.reduction = reduction
        self.region = region
        self.batch_size = batch_size
        self.workers = workers
        self.forward_passes = 0
        self._count_lock = threading.Lock()

    def _counted(self, images: np.ndarray) -> None:
        with self._count_lock:
            self.forward_passes += images.shape[0]

    def _scores(self, images: np.ndarray, class_index: int) -> np.ndarray:
        scores = class_scores(self.model, images, class_index, self.reduction, self.region)
        self._counted(images)
        return scores

    def _tapped(self, images: np.ndarray, layer: str) -> Tensor:
        with no_grad():
            _, taps = forward_with_taps(self.model, Tensor(images), [layer])
        self._counted(images)
        return taps[layer]

    def channel_masks(self, activations: np.ndarray, height: int, width: int) -> np.ndarray:
        """K×H×W normalized masks for K×h×w activations."""
        return np.stack([normalize_mask(channel, height, width).data for channel in activations])

    def channel_weights(self, image: Tensor, masks: np.ndarray, class_index: int) -> np.ndarray:
        """Weights of all masks; the baseline score is computed once."""
        data = _single_image(image)
        baseline = self._scores(np.zeros_like(data), class_index)[0]

        batches = [masks[i:i + self.batch_size] for i in range(0, len(masks), self.batch_size)]
        scores = ordered_map(
            lambda batch: self._scores(data * batch[:, np.newaxis], class_index),
            batches,
            workers=self.workers,
        )
        return np.concatenate(scores) - baseline

    def _check_class(self, class_index: int) -> None:
        if isinstance(class_index, bool) or not isinstance(class_index, (int, np.integer)) \
                or not 0 <= class_index < self.model.num_classes:
            raise ConfigurationError(
                f"class index must be in 0..{self.model.num_classes - 1}, got {class_index!r}"
            )

    def heatmap(self, image: Tensor, layer: str, class_index: int) -> Heatmap:
        """
        Heatmap of ``class_index`` at the resolution of tap ``layer``.

        Raises:
            UnknownTapError: If ``layer`` is not a tap or layer of the model
            ConfigurationError: If the class index is out of range
            ShapeError: If the tapped output is not spatial
        """
        self._check_class(class_index)
        data = _single_image(image)
        activations = self._tapped(data, layer).data
        if activations.ndim != 4:
            raise ShapeError(f"tap {layer} is not a spatial B×K×h×w activation: {activations.shape}")
        activations = activations[0]

        masks = self.channel_masks(activations, data.shape[2], data.shape[3])
        alphas = self.channel_weights(Tensor(data), masks, class_index)
        values = weighted_activation_sum(activations, alphas)
        weights = [ChannelWeight(k, float(a)) for k, a in enumerate(alphas)]
        logger.debug(f"Score-CAM {layer}: {len(weights)} channels, peak {values.max():.4g}")
        return Heatmap(values, layer, class_index, 'raw', weights)

    def explain_stages(self, image: Tensor, stage_taps: Sequence[str], class_index: int) -> List[Heatmap]:
        """One heatmap per tap, in tap order."""
        return [self.heatmap(image, tap, class_index) for tap in stage_taps]


def scorecam(
    model: ModelGraph,
    image: Tensor,
    layer: str,
    class_index: int,
    reduction: str = 'mean',
    region: Optional[np.ndarray] = None,
    batch_size: int = 16,
) -> Heatmap:
    """Score-CAM heatmap of ``class_index`` at tap ``layer``."""
    return ScoreCAM(model, reduction, region, batch_size).heatmap(image, layer, class_index)


def explain_stages(
    model: ModelGraph,
    image: Tensor,
    stage_taps: Sequence[str],
    class_index: int,
    reduction: str = 'mean',
    batch_size: int = 16,
) -> List[Heatmap]:
    """Heatmaps for several stages (encoder layers, ASPP, decoder inputs and output)."""
    return ScoreCAM(model, reduction, batch_size=batch_size).explain_stages(image, stage_taps, class_index)


def colorize(values: np.ndarray) -> np.ndarray:
    """Map unit-range H×W values through COLORMAP to 3×H×W RGB in [0, 1]."""
    index = np.clip(np.round(np.asarray(values) * 255.0), 0, 255).astype(np.int64)
    return np.moveaxis(COLORMAP[index], -1, 0)


def overlay(heatmap: Heatmap, image: Union[Tensor, np.ndarray], alpha: float = 0.5) -> Tensor:
    """
    Blend alpha·colormap(heatmap) + (1 − alpha)·image.

    Args:
        heatmap: Unit-max heatmap; resized to the image size
        image: 3×H×W (or 1×3×H×W) image with values in [0, 1]
        alpha: Colormap weight in [0, 1]

    Raises:
        ConfigurationError: If alpha is outside [0, 1] or the heatmap is not unit-max
    """
    validate_probability(alpha, 'alpha')
    if heatmap.state != 'unit-max':
        raise ConfigurationError("overlay needs a unit-max heatmap; call unit_max() first")
    data = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=np.float64)
    if data.ndim == 4 and data.shape[0] == 1:
        data = data[0]
    if data.ndim != 3 or data.shape[0] != 3:
        raise ShapeError(f"overlay needs a 3×H×W image, got shape {data.shape}")
    colors = colorize(heatmap.resized(data.shape[1], data.shape[2]).values)
    return Tensor(alpha * colors + (1.0 - alpha) * data)


def _write_png(pixels: np.ndarray, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(pixels).save(path)
    except (OSError, ValueError) as e:
        raise ImageWriteError(f"cannot write {path}: {e}") from e
    return path


def save_heatmap(heatmap: Heatmap, path: Union[str, Path]) -> Path:
    """Write the heatmap as an 8-bit grayscale image."""
    return _write_png(heatmap.to_uint8(), path)


def save_overlay(image: Union[Tensor, np.ndarray], path: Union[str, Path]) -> Path:
    """Write a 3×H×W [0, 1] image as an 8-bit RGB file."""
    data = image.data if isinstance(image, Tensor) else np.asarray(image)
    if data.ndim == 4:
        data = data[0]
    pixels = np.round(np.clip(np.moveaxis(data, 0, -1), 0.0, 1.0) * 255.0).astype(np.uint8)
    return _write_png(pixels, path)


def dilate_region(region: np.ndarray, radius: int) -> np.ndarray:
    """Binary region grown by ``radius`` pixels (square neighbourhood)."""
    region = np.asarray(region) > 0
    if radius == 0:
        return region
    grown = Image.fromarray(region.astype(np.uint8) * 255).filter(ImageFilter.MaxFilter(2 * radius + 1))
    return np.asarray(grown) > 0


def heatmap_mass_in_region(heatmap: Heatmap, region: np.ndarray, dilation: int = 0) -> float:
    """
    Fraction of the heatmap's total value inside a binary region.

    The region is first grown by ``dilation`` pixels. An all-zero map gives 0.
    """
    validate_non_negative_int(dilation, 'dilation')
    region = dilate_region(region, dilation).astype(np.float64)
    values = heatmap.resized(*region.shape).values
    total = values.sum()
    if total <= 0:
        return 0.0
    return float((values * (region > 0)).sum() / total)
