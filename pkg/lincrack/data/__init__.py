"""
lincrack data

Manifests and the stratified split, image/mask loading, weight bundles and
the synthetic crack corpus.
"""

from .manifest import (
    SampleRecord,
    SampleManifest,
    stratified_split,
    split_sizes,
    validate_ratios,
    parse_label,
    MANIFEST_COLUMNS,
)
from .images import (
    load_image,
    load_mask,
    load_batch,
    load_mask_batch,
    save_mask,
    standardize,
    denormalize_image,
    pixels_to_tensor,
)
from .weights import (
    write_bundle,
    read_bundle,
    encode_bundle,
    decode_bundle,
    save_weights,
    load_weights,
    MAGIC,
    FORMAT_VERSION,
)
from .synth import synth_dataset, draw_sample, MANIFEST_NAME

__all__ = [
    'SampleRecord',
    'SampleManifest',
    'stratified_split',
    'split_sizes',
    'validate_ratios',
    'parse_label',
    'MANIFEST_COLUMNS',
    'load_image',
    'load_mask',
    'load_batch',
    'load_mask_batch',
    'save_mask',
    'standardize',
    'denormalize_image',
    'pixels_to_tensor',
    'write_bundle',
    'read_bundle',
    'encode_bundle',
    'decode_bundle',
    'save_weights',
    'load_weights',
    'MAGIC',
    'FORMAT_VERSION',
    'synth_dataset',
    'draw_sample',
    'MANIFEST_NAME',
]
