"""
Synthetic Crack Corpus

Desk-scale stand-in for a tunnel-lining dataset: textured concrete-like
backgrounds, and crack images with dark random polylines whose exact pixels
are written as the ground-truth mask. Every image gets a mask file; the
masks of background images are empty.
"""

from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from PIL import Image, ImageDraw, ImageFilter

from lincrack.constants import BACKGROUND, CRACK, DEFAULT_SEED
from lincrack.core.exceptions import ConfigurationError, DataError
from lincrack.data.manifest import SampleManifest, SampleRecord
from lincrack.utils.logger import get_logger, log_performance
from lincrack.utils.validation import (
    validate_positive_int,
    validate_positive_ints,
    validate_probability,
    validate_size,
)

logger = get_logger(__name__)

DEFAULT_SYNTH_SIZE = (64, 64)
DEFAULT_CRACK_WIDTH = (1, 3)
MANIFEST_NAME = "manifest.csv"


def _texture(rng: np.random.Generator, height: int, width: int) -> Image.Image:
    base = rng.uniform(110, 170)
    coarse = rng.normal(0.0, 18.0, size=(max(2, height // 8), max(2, width // 8)))
    blotches = Image.fromarray(coarse.astype(np.float32)).resize((width, height), Image.BILINEAR)
    grain = rng.normal(0.0, 8.0, size=(height, width))
    gray = np.clip(base + np.asarray(blotches, dtype=np.float64) + grain, 0, 255)
    tint = rng.uniform(-6, 6, size=3)
    rgb = np.clip(gray[..., np.newaxis] + tint, 0, 255).astype(np.uint8)
    return Image.fromarray(rgb).filter(ImageFilter.SMOOTH)


def _crack_polyline(rng: np.random.Generator, height: int, width: int) -> List[Tuple[float, float]]:
    x, y = rng.uniform(0.1 * width, 0.9 * width), rng.uniform(0.1 * height, 0.9 * height)
    heading = rng.uniform(0, 2 * np.pi)
    step = max(height, width) / 6.0
    points = [(x, y)]
    for _ in range(int(rng.integers(3, 7))):
        heading += rng.normal(0.0, 0.6)
        x = float(np.clip(x + step * np.cos(heading), 0, width - 1))
        y = float(np.clip(y + step * np.sin(heading), 0, height - 1))
        points.append((x, y))
    return points


def draw_sample(rng: np.random.Generator, size: Tuple[int, int], crack: bool,
                crack_width: Tuple[int, int] = DEFAULT_CRACK_WIDTH) -> Tuple[Image.Image, Image.Image]:
    """One (RGB image, L mask) pair; crack strokes are crack_width[0]..crack_width[1] pixels wide."""
    height, width = size
    image = _texture(rng, height, width)
    mask = Image.new('L', (width, height), 0)
    if crack:
        draw_image = ImageDraw.Draw(image)
        draw_mask = ImageDraw.Draw(mask)
        for _ in range(int(rng.integers(1, 3))):
            points = _crack_polyline(rng, height, width)
            line_width = int(rng.integers(crack_width[0], crack_width[1] + 1))
            shade = int(rng.integers(15, 50))
            draw_image.line(points, fill=(shade, shade, shade), width=line_width, joint='curve')
            draw_mask.line(points, fill=255, width=line_width, joint='curve')
    return image, mask


@log_performance
def synth_dataset(
    root: Union[str, Path],
    n_images: int,
    size: Tuple[int, int] = DEFAULT_SYNTH_SIZE,
    seed: int = DEFAULT_SEED,
    crack_fraction: float = 0.5,
    crack_width: Tuple[int, int] = DEFAULT_CRACK_WIDTH,
) -> SampleManifest:
    """
    Generate a synthetic corpus under ``root`` and save its manifest.

    Images go to ``root/images``, masks to ``root/masks``, the manifest to
    ``root/manifest.csv``. At least one image of each class is produced.
    Output is identical for identical arguments.

    Raises:
        ConfigurationError: If n_images < 2 or another argument is invalid
        DataError: If the directory cannot be written
    """
    validate_positive_int(n_images, 'n_images')
    if n_images < 2:
        raise ConfigurationError(f"n_images must be at least 2, got {n_images}")
    size = validate_size(size, 'size')
    validate_probability(crack_fraction, 'crack_fraction')
    crack_width = validate_positive_ints(crack_width, 'crack_width')
    if len(crack_width) != 2 or crack_width[0] > crack_width[1]:
        raise ConfigurationError(f"crack_width must be (min, max), got {crack_width}")

    root = Path(root)
    n_crack = int(min(n_images - 1, max(1, round(n_images * crack_fraction))))
    labels = [CRACK] * n_crack + [BACKGROUND] * (n_images - n_crack)
    np.random.default_rng(seed).shuffle(labels)

    records = []
    try:
        (root / "images").mkdir(parents=True, exist_ok=True)
        (root / "masks").mkdir(parents=True, exist_ok=True)
        for index, label in enumerate(labels):
            rng = np.random.default_rng([seed, index])
            image, mask = draw_sample(rng, size, crack=label == CRACK, crack_width=crack_width)
            image_path = f"images/{index:04d}.png"
            mask_path = f"masks/{index:04d}.png"
            image.save(root / image_path)
            mask.save(root / mask_path)
            records.append(SampleRecord(image_path, label, mask_path))
        manifest = SampleManifest(records, {
            'dataset': 'synthetic',
            'seed': seed,
            'image_size': list(size),
            'images': n_images,
            'crack_width': list(crack_width),
        }, root=root)
        manifest.save(root / MANIFEST_NAME)
    except OSError as e:
        raise DataError(f"cannot write synthetic corpus to {root}: {e}") from e

    logger.info(f"Generated {n_images} synthetic images ({n_crack} crack) in {root}")
    return manifest
