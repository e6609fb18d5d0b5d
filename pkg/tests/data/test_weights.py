"""
Tests for the weight bundle format.
"""

import json
import struct

import numpy as np
import pytest

from lincrack.core.exceptions import ShapeMismatchError, WeightBundleError
from lincrack.core.models import build_classifier, classifier_preset
from lincrack.core.tensor import Tensor
from lincrack.data import MAGIC, decode_bundle, encode_bundle, load_weights, read_bundle, save_weights, write_bundle


def raw_bundle(entries, payload: bytes, version: int = 1) -> bytes:
    header = json.dumps({'format_version': version, 'tensors': entries}).encode('utf-8')
    return MAGIC + struct.pack('<I', len(header)) + header + payload


def entry(name='w', shape=(4,), offset=0, nbytes=32, dtype='<f8'):
    return {'name': name, 'shape': list(shape), 'dtype': dtype, 'offset': offset, 'nbytes': nbytes}


class TestEncoding:
    def test_layout(self):
        blob = encode_bundle({'w': np.arange(4.0)})
        assert blob[:4] == b"NWB1"
        (header_len,) = struct.unpack('<I', blob[4:8])
        header = json.loads(blob[8:8 + header_len])
        assert header == {'format_version': 1, 'tensors': [entry()]}
        assert len(blob) == 8 + header_len + 32
        assert blob[8 + header_len:] == np.arange(4.0).astype('<f8').tobytes()

    def test_tensors_in_name_order(self):
        blob = encode_bundle({'b': np.zeros(1), 'a': np.ones((2, 2))})
        (header_len,) = struct.unpack('<I', blob[4:8])
        names = [e['name'] for e in json.loads(blob[8:8 + header_len])['tensors']]
        assert names == ['a', 'b']

    def test_decode(self):
        tensors = {'conv.weight': np.arange(6.0).reshape(1, 2, 3), 'bias': np.array([0.5])}
        decoded = decode_bundle(encode_bundle(tensors))
        assert set(decoded) == set(tensors)
        for name, values in tensors.items():
            np.testing.assert_array_equal(decoded[name], values)
            assert decoded[name].dtype == np.float64

    def test_encoding_is_canonical(self):
        blob = encode_bundle({'x': np.array([1.0, 2.0]), 'y': np.eye(2)})
        assert encode_bundle(decode_bundle(blob)) == blob


class TestCorruptBundles:
    def test_bad_magic(self):
        with pytest.raises(WeightBundleError):
            decode_bundle(b"NWB2" + encode_bundle({'w': np.zeros(4)})[4:])

    def test_too_short(self):
        with pytest.raises(WeightBundleError):
            decode_bundle(b"NWB")

    def test_truncated_header(self):
        blob = encode_bundle({'w': np.zeros(4)})
        with pytest.raises(WeightBundleError):
            decode_bundle(blob[:12])

    def test_truncated_payload(self):
        with pytest.raises(WeightBundleError):
            decode_bundle(encode_bundle({'w': np.zeros(4)})[:-8])

    def test_trailing_bytes(self):
        with pytest.raises(WeightBundleError):
            decode_bundle(encode_bundle({'w': np.zeros(4)}) + b"\x00" * 8)

    def test_unsupported_version(self):
        with pytest.raises(WeightBundleError):
            decode_bundle(raw_bundle([entry()], bytes(32), version=2))

    def test_malformed_header(self):
        header = b"{not json"
        with pytest.raises(WeightBundleError):
            decode_bundle(MAGIC + struct.pack('<I', len(header)) + header)

    @pytest.mark.parametrize("bad", [
        entry(dtype='<f4'),
        entry(nbytes=24),
        entry(offset=8),
        {'name': 'w', 'shape': [4]},
    ])
    def test_bad_entries(self, bad):
        with pytest.raises(WeightBundleError):
            decode_bundle(raw_bundle([bad], bytes(32)))

    def test_overlapping_entries(self):
        entries = [entry('a', (2,), 0, 16), entry('b', (2,), 8, 16)]
        with pytest.raises(WeightBundleError):
            decode_bundle(raw_bundle(entries, bytes(32)))

    def test_duplicate_names(self):
        entries = [entry('a', (2,), 0, 16), entry('a', (2,), 16, 16)]
        with pytest.raises(WeightBundleError):
            decode_bundle(raw_bundle(entries, bytes(32)))

    def test_missing_file(self, tmp_path):
        with pytest.raises(WeightBundleError):
            read_bundle(tmp_path / "absent.nwb")


class TestModelWeights:
    def test_save_load_save_is_byte_identical(self, tmp_path, toy_classifier):
        first = save_weights(toy_classifier, tmp_path / "a.nwb")
        other = build_classifier(classifier_preset('toy', seed=5))
        load_weights(first, other)
        second = save_weights(other, tmp_path / "b.nwb")
        assert first.read_bytes() == second.read_bytes()

    def test_loaded_model_reproduces_outputs(self, tmp_path, toy_classifier, rng):
        path = save_weights(toy_classifier, tmp_path / "w.nwb")
        other = build_classifier(classifier_preset('toy', seed=5))
        load_weights(path, other)
        image = Tensor(rng.normal(size=(1, 3, 32, 32)))
        np.testing.assert_array_equal(other.forward(image).data, toy_classifier.forward(image).data)

    def test_state_only(self, tmp_path):
        path = write_bundle({'w': np.ones(3)}, tmp_path / "w.nwb")
        np.testing.assert_array_equal(load_weights(path)['w'], np.ones(3))

    def test_wrong_architecture(self, tmp_path, toy_classifier, toy_segmenter):
        path = save_weights(toy_segmenter, tmp_path / "seg.nwb")
        with pytest.raises(ShapeMismatchError):
            load_weights(path, toy_classifier)
