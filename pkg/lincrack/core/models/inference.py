"""
Model Inference

Classification and segmentation decisions, tapped evaluation for Score-CAM,
and the YAML structure documents stored next to weight bundles.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np
import yaml

from lincrack.constants import BACKGROUND, CLASS_NAMES, CRACK
from lincrack.core.exceptions import ConfigurationError, InputSizeError
from lincrack.core.models.config import DenseNetConfig, SegmenterConfig
from lincrack.core.models.deeplab import build_segmenter
from lincrack.core.models.densenet import build_classifier
from lincrack.core.models.graph import ModelGraph
from lincrack.core.tensor import Tensor, no_grad, softmax
from lincrack.utils.logger import get_logger
from lincrack.utils.validation import validate_probability

logger = get_logger(__name__)

MODEL_CONFIG_VERSION = 1
ARCHITECTURES = {
    'densenet': (DenseNetConfig, build_classifier),
    'deeplab': (SegmenterConfig, build_segmenter),
}


@dataclass
class ClassificationResult:
    """Softmax probabilities (background, crack) and the decided label."""
    probs: Tuple[float, float]
    label: int

    @property
    def label_name(self) -> str:
        return CLASS_NAMES[self.label]

    @property
    def is_crack(self) -> bool:
        return self.label == CRACK


def _batched(image: Tensor) -> Tuple[Tensor, bool]:
    if image.ndim == 3:
        return Tensor(image.data[np.newaxis]), True
    if image.ndim == 4:
        return image, False
    raise InputSizeError(f"expected C×H×W or B×C×H×W image, got shape {image.shape}")


def decide_label(logits: np.ndarray) -> int:
    """Argmax of (background, crack) logits; ties go to crack."""
    return CRACK if logits[CRACK] >= logits[BACKGROUND] else BACKGROUND


def classify_batch(model: ModelGraph, images: Tensor) -> List[ClassificationResult]:
    """Classify every image of a B×C×H×W batch."""
    with no_grad():
        logits = model.forward(images)
        probs = softmax(logits, axis=1).data
    return [
        ClassificationResult((float(p[BACKGROUND]), float(p[CRACK])), decide_label(z))
        for p, z in zip(probs, logits.data)
    ]


def classify(model: ModelGraph, image: Tensor) -> ClassificationResult:
    """
    Classify one image as background or crack.

    Args:
        model: Classifier graph
        image: C×H×W or 1×C×H×W tensor at the model input size

    Raises:
        InputSizeError: If the image does not match the model input size
    """
    batch, _ = _batched(image)
    if batch.shape[0] != 1:
        raise InputSizeError(f"classify takes one image, got a batch of {batch.shape[0]}")
    return classify_batch(model, batch)[0]


def crack_probability(model: ModelGraph, image: Tensor) -> np.ndarray:
    """Per-pixel crack probability: H×W for one image, B×H×W for a batch."""
    batch, single = _batched(image)
    with no_grad():
        probs = softmax(model.forward(batch), axis=1).data[:, CRACK]
    return probs[0] if single else probs


def segment(model: ModelGraph, image: Tensor, threshold: float = 0.5) -> Tensor:
    """
    Binary crack mask: 1 where the crack probability strictly exceeds threshold.

    Returns:
        H×W mask for a single image, B×H×W for a batch

    Raises:
        InputSizeError: If the image does not match the model input size
        ConfigurationError: If threshold is outside [0, 1]
    """
    validate_probability(threshold, 'threshold')
    probs = crack_probability(model, image)
    return Tensor((probs > threshold).astype(np.float64))


def forward_with_taps(
    model: ModelGraph,
    image: Tensor,
    tap_names: Sequence[str] = (),
) -> Tuple[Tensor, Dict[str, Tensor]]:
    """
    Evaluate the model and return the requested intermediate tensors.

    The output is identical to a plain forward pass; every tap is the exact
    tensor the layer produced.

    Raises:
        UnknownTapError: If a tap name is neither a tap alias nor a layer name
    """
    batch, _ = _batched(image)
    return model.run(batch, taps=tap_names)


# Structure documents -------------------------------------------------------

def model_config_document(model: ModelGraph) -> Dict[str, Any]:
    return {
        'format_version': MODEL_CONFIG_VERSION,
        'architecture': model.metadata['architecture'],
        'input_size': list(model.input_size),
        'num_classes': model.num_classes,
        'config': model.metadata['config'],
    }


def save_model_config(model: ModelGraph, path: Union[str, Path]) -> Path:
    """Write the YAML document that rebuilds ``model``'s structure."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        yaml.safe_dump(model_config_document(model), f, default_flow_style=False, sort_keys=False)
    logger.debug(f"Model structure saved to {path}")
    return path


def config_from_document(document: Dict[str, Any]) -> Union[DenseNetConfig, SegmenterConfig]:
    if not isinstance(document, dict):
        raise ConfigurationError("model config document must be a mapping")
    architecture = document.get('architecture')
    if architecture not in ARCHITECTURES:
        raise ConfigurationError(f"unknown architecture {architecture!r}; expected one of {sorted(ARCHITECTURES)}")
    version = document.get('format_version', MODEL_CONFIG_VERSION)
    if version != MODEL_CONFIG_VERSION:
        raise ConfigurationError(f"unsupported model config format_version {version}")
    config_cls, _ = ARCHITECTURES[architecture]
    return config_cls.from_dict(document.get('config', {}))


def load_model_config(path: Union[str, Path]) -> Union[DenseNetConfig, SegmenterConfig]:
    """
    Read a structure document written by save_model_config.

    Raises:
        ConfigurationError: If the file is missing, unreadable or invalid
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"model config not found: {path}")
    try:
        with open(path, 'r') as f:
            document = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"invalid model config {path}: {e}") from e
    return config_from_document(document)


def build_model(config: Union[DenseNetConfig, SegmenterConfig]) -> ModelGraph:
    """Build the graph matching a config's type."""
    if isinstance(config, DenseNetConfig):
        return build_classifier(config)
    if isinstance(config, SegmenterConfig):
        return build_segmenter(config)
    raise ConfigurationError(f"no model builder for {type(config).__name__}")
