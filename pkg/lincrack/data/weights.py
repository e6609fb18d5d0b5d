"""
Weight Bundles

Binary layout:

    b"NWB1" | header length (uint32, little-endian) | header | payload

The header is compact JSON with sorted keys:
``{"format_version": 1, "tensors": [{"name", "shape", "dtype", "offset", "nbytes"}]}``.
Tensors are stored in name order as contiguous little-endian float64
('<f8'); offsets are relative to the start of the payload.
"""

import json
import struct
from pathlib import Path
from typing import Dict, Mapping, Optional, Union

import numpy as np

from lincrack.core.exceptions import WeightBundleError
from lincrack.utils.logger import get_logger

logger = get_logger(__name__)

MAGIC = b"NWB1"
FORMAT_VERSION = 1
DTYPE = '<f8'
_LENGTH = struct.Struct('<I')


def encode_bundle(tensors: Mapping[str, np.ndarray]) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for name in sorted(tensors):
        array = np.ascontiguousarray(tensors[name], dtype=DTYPE)
        raw = array.tobytes()
        entries.append({
            'name': name,
            'shape': list(array.shape),
            'dtype': DTYPE,
            'offset': offset,
            'nbytes': len(raw),
        })
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({'format_version': FORMAT_VERSION, 'tensors': entries},
                        sort_keys=True, separators=(',', ':')).encode('utf-8')
    return MAGIC + _LENGTH.pack(len(header)) + header + b"".join(chunks)


def decode_bundle(blob: bytes) -> Dict[str, np.ndarray]:
    """
    Parse bundle bytes into name → array.

    Raises:
        WeightBundleError: On bad magic, unsupported version, malformed header,
            overlapping or out-of-range offsets, or a truncated payload
    """
    prefix = len(MAGIC) + _LENGTH.size
    if len(blob) < prefix or blob[:len(MAGIC)] != MAGIC:
        raise WeightBundleError("not a weight bundle (bad magic)")
    (header_len,) = _LENGTH.unpack_from(blob, len(MAGIC))
    if len(blob) < prefix + header_len:
        raise WeightBundleError("truncated bundle header")
    try:
        header = json.loads(blob[prefix:prefix + header_len].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise WeightBundleError(f"malformed bundle header: {e}") from e

    if not isinstance(header, dict) or header.get('format_version') != FORMAT_VERSION:
        version = header.get('format_version') if isinstance(header, dict) else None
        raise WeightBundleError(f"unsupported bundle format_version {version!r}")

    payload = memoryview(blob)[prefix + header_len:]
    tensors: Dict[str, np.ndarray] = {}
    expected_offset = 0
    try:
        for entry in header['tensors']:
            name, shape, offset, nbytes = entry['name'], tuple(entry['shape']), entry['offset'], entry['nbytes']
            if entry.get('dtype') != DTYPE:
                raise WeightBundleError(f"{name}: unsupported dtype {entry.get('dtype')!r}")
            if name in tensors:
                raise WeightBundleError(f"duplicate tensor {name}")
            if offset != expected_offset:
                raise WeightBundleError(f"{name}: offset {offset} overlaps or leaves a gap (expected {expected_offset})")
            if nbytes != int(np.prod(shape, dtype=np.int64)) * 8:
                raise WeightBundleError(f"{name}: {nbytes} bytes do not match shape {shape}")
            if offset + nbytes > len(payload):
                raise WeightBundleError(f"{name}: truncated payload")
            tensors[name] = np.frombuffer(payload[offset:offset + nbytes], dtype=DTYPE).reshape(shape).copy()
            expected_offset = offset + nbytes
    except (KeyError, TypeError) as e:
        raise WeightBundleError(f"malformed bundle header entry: {e}") from e
    if expected_offset != len(payload):
        raise WeightBundleError(f"payload has {len(payload) - expected_offset} unexpected trailing bytes")
    return tensors


def write_bundle(tensors: Mapping[str, np.ndarray], path: Union[str, Path]) -> Path:
    """Write name → array as a bundle file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_bundle(tensors))
    logger.debug(f"Wrote {len(tensors)} tensors to {path}")
    return path


def read_bundle(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise WeightBundleError(f"weight bundle not found: {path}")
    return decode_bundle(path.read_bytes())


def save_weights(model, path: Union[str, Path]) -> Path:
    """Write every parameter and batch-norm buffer of a ModelGraph."""
    return write_bundle(model.state_dict(), path)


def load_weights(path: Union[str, Path], model: Optional[object] = None) -> Dict[str, np.ndarray]:
    """
    Read a bundle; with ``model``, check it against the model and load it.

    Raises:
        WeightBundleError: If the bundle is malformed
        ShapeMismatchError: If names or shapes differ from the model's
    """
    state = read_bundle(path)
    if model is not None:
        model.load_state_dict(state, strict=True)
        logger.info(f"Loaded {len(state)} tensors from {path}")
    return state
