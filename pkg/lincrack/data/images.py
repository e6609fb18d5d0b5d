"""
Image and Mask I/O

Raster decoding with Pillow; images are bilinearly resized, scaled to
[0, 1] and standardized per channel, masks are resized nearest-neighbour
and binarized.
"""

from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from lincrack.constants import IMAGE_MEAN, IMAGE_STD
from lincrack.core.exceptions import ImageLoadError, ImageWriteError, ShapeError
from lincrack.core.tensor import Tensor, bilinear_resize, no_grad
from lincrack.utils.concurrency import ordered_map
from lincrack.utils.logger import get_logger
from lincrack.utils.validation import validate_positive_int

logger = get_logger(__name__)

MASK_THRESHOLD = 128

PathLike = Union[str, Path]


def _open(path: PathLike, mode: str) -> np.ndarray:
    try:
        with Image.open(path) as image:
            return np.asarray(image.convert(mode))
    except FileNotFoundError as e:
        raise ImageLoadError(f"image not found: {path}") from e
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise ImageLoadError(f"cannot decode {path}: {e}") from e


def standardize(pixels: np.ndarray, mean: Sequence[float] = IMAGE_MEAN,
                std: Sequence[float] = IMAGE_STD) -> np.ndarray:
    """(x − mean) / std per channel for 3×H×W values in [0, 1]."""
    mean = np.asarray(mean, dtype=np.float64).reshape(-1, 1, 1)
    std = np.asarray(std, dtype=np.float64).reshape(-1, 1, 1)
    return (pixels - mean) / std


def denormalize_image(image: Union[Tensor, np.ndarray], mean: Sequence[float] = IMAGE_MEAN,
                      std: Sequence[float] = IMAGE_STD) -> np.ndarray:
    """Undo standardization: 3×H×W values clipped to [0, 1]."""
    data = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=np.float64)
    if data.ndim == 4:
        data = data[0]
    mean = np.asarray(mean, dtype=np.float64).reshape(-1, 1, 1)
    std = np.asarray(std, dtype=np.float64).reshape(-1, 1, 1)
    return np.clip(data * std + mean, 0.0, 1.0)


def pixels_to_tensor(rgb: np.ndarray, target_h: int, target_w: int,
                     mean: Sequence[float] = IMAGE_MEAN, std: Sequence[float] = IMAGE_STD) -> Tensor:
    """H×W×3 uint8 pixels to a standardized 1×3×target_h×target_w tensor."""
    scaled = np.moveaxis(np.asarray(rgb, dtype=np.float64), -1, 0)[np.newaxis] / 255.0
    if scaled.shape[2:] != (target_h, target_w):
        with no_grad():
            scaled = bilinear_resize(Tensor(scaled), target_h, target_w).data
    return Tensor(standardize(scaled[0], mean, std)[np.newaxis])


def load_image(path: PathLike, target_h: int, target_w: int,
               mean: Sequence[float] = IMAGE_MEAN, std: Sequence[float] = IMAGE_STD) -> Tensor:
    """
    Decode an image to RGB and return it as a standardized 1×3×H×W tensor.

    Raises:
        ImageLoadError: If the file is missing or not a readable raster image
    """
    validate_positive_int(target_h, 'target_h')
    validate_positive_int(target_w, 'target_w')
    return pixels_to_tensor(_open(path, 'RGB'), target_h, target_w, mean, std)


def nearest_indices(in_size: int, out_size: int) -> np.ndarray:
    """Source index of each output position under half-pixel nearest sampling."""
    index = np.floor((np.arange(out_size) + 0.5) * in_size / out_size).astype(np.int64)
    return np.clip(index, 0, in_size - 1)


def load_mask(path: PathLike, target_h: int, target_w: int) -> Tensor:
    """
    Decode a grayscale mask as an H×W tensor of 0/1 (1 where the pixel is ≥ 128).

    Raises:
        ImageLoadError: If the file is missing or not a readable raster image
    """
    validate_positive_int(target_h, 'target_h')
    validate_positive_int(target_w, 'target_w')
    gray = _open(path, 'L')
    if gray.shape != (target_h, target_w):
        gray = gray[np.ix_(nearest_indices(gray.shape[0], target_h), nearest_indices(gray.shape[1], target_w))]
    return Tensor((gray >= MASK_THRESHOLD).astype(np.float64))


def save_mask(mask: Union[Tensor, np.ndarray], path: PathLike) -> Path:
    """
    Write a binary mask as 8-bit grayscale (0 / 255).

    Raises:
        ShapeError: If the mask is not H×W
        ImageWriteError: If the file cannot be written
    """
    data = mask.data if isinstance(mask, Tensor) else np.asarray(mask)
    data = np.asarray(data)
    if data.ndim == 3 and data.shape[0] == 1:
        data = data[0]
    if data.ndim != 2:
        raise ShapeError(f"mask must be H×W, got shape {data.shape}")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.where(data > 0, 255, 0).astype(np.uint8)).save(path)
    except (OSError, ValueError) as e:
        raise ImageWriteError(f"cannot write mask {path}: {e}") from e
    return path


def load_batch(paths: Sequence[PathLike], size: Tuple[int, int], workers: int = 1) -> Tensor:
    """Load several images into one B×3×H×W tensor; loading may run on a thread pool."""
    height, width = size
    images = ordered_map(lambda p: load_image(p, height, width).data, paths, workers=workers)
    return Tensor(np.concatenate(images, axis=0))


def load_mask_batch(paths: Sequence[PathLike], size: Tuple[int, int], workers: int = 1) -> np.ndarray:
    """Load several masks into a B×H×W integer array."""
    height, width = size
    masks = ordered_map(lambda p: load_mask(p, height, width).data, paths, workers=workers)
    return np.stack(masks).astype(np.int64)
