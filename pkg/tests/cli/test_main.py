"""
Tests for the lincrack command line.
"""

from pathlib import Path

import pytest
import yaml

from lincrack.cli.main import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from lincrack.constants import CRACK
from lincrack.data import SampleManifest

TOY = [
    '--set', 'classifier.preset=toy',
    '--set', 'classifier.input_size=[32, 32]',
    '--set', 'segmenter.preset=toy',
    '--set', 'segmenter.input_size=[64, 64]',
]


@pytest.fixture
def dataset(tmp_path) -> Path:
    """A split synthetic corpus written through the CLI; returns the manifest path."""
    root = tmp_path / "data"
    assert main(['synth', str(root), '-n', '10', '--size', '32', '32', '--seed', '3']) == EXIT_OK
    return root / "manifest.csv"


class TestConfigCommand:
    def test_prints_yaml(self, capsys):
        assert main(['config']) == EXIT_OK
        assert 'seg_threshold' in capsys.readouterr().out

    def test_writes_file_with_overrides(self, tmp_path):
        target = tmp_path / "pipeline.yaml"
        assert main(['--set', 'seg_threshold=0.7', 'config', '-o', str(target)]) == EXIT_OK
        assert yaml.safe_load(target.read_text())['seg_threshold'] == 0.7

    def test_unknown_override_key(self):
        assert main(['--set', 'bogus=1', 'config']) == EXIT_USAGE

    def test_missing_config_file(self, tmp_path):
        assert main(['--config', str(tmp_path / "absent.yaml"), 'config']) == EXIT_USAGE


class TestDataCommands:
    def test_synth_assigns_splits(self, dataset):
        manifest = SampleManifest.load(dataset)
        assert len(manifest) == 10
        assert all(r.split is not None for r in manifest)
        assert len(manifest.by_split('train')) == 6

    def test_synth_without_split(self, tmp_path):
        root = tmp_path / "raw"
        assert main(['synth', str(root), '-n', '4', '--size', '16', '16', '--no-split']) == EXIT_OK
        assert all(r.split is None for r in SampleManifest.load(root / "manifest.csv"))

    def test_crack_only_split_elsewhere(self, dataset, tmp_path):
        target = tmp_path / "elsewhere" / "cracks.csv"
        target.parent.mkdir()
        assert main(['split', str(dataset), '--crack-only', '-o', str(target)]) == EXIT_OK
        manifest = SampleManifest.load(target)
        assert len(manifest) == 5
        assert all(r.label == CRACK for r in manifest)
        assert all(manifest.resolve(r.image_path).exists() for r in manifest)

    def test_split_needs_manifest(self):
        assert main(['split']) == EXIT_USAGE

    def test_split_missing_manifest(self, tmp_path):
        assert main(['split', str(tmp_path / "absent.csv")]) == EXIT_USAGE


class TestModelCommands:
    def test_explain_without_weights(self, dataset, tmp_path):
        image = next(dataset.parent.glob("images/*.png"))
        code = main([*TOY, 'explain', str(image), '--weights', str(tmp_path / "absent.nwb")])
        assert code == EXIT_RUNTIME

    def test_train_run_eval(self, dataset, tmp_path):
        out = tmp_path / "out"
        common = [*TOY, '--set', f'output_dir={out}']
        assert main([*common, 'train-cls', str(dataset), '--epochs', '1', '--batch-size', '3']) == EXIT_OK
        assert main([*common, 'train-seg', str(dataset), '--epochs', '1', '--batch-size', '3']) == EXIT_OK
        weights = out / "train"
        assert (weights / "classifier.nwb").exists()
        assert (weights / "segmenter.nwb").exists()

        stage_weights = ['--classifier-weights', str(weights / "classifier.nwb"),
                         '--segmenter-weights', str(weights / "segmenter.nwb")]
        assert main([*common, 'run', str(dataset), *stage_weights]) == EXIT_OK
        assert (out / "report.yaml").exists()

        report = tmp_path / "eval.yaml"
        assert main([*common, 'eval', str(dataset), *stage_weights, '-o', str(report)]) == EXIT_OK
        assert yaml.safe_load(report.read_text())['classification']['support_crack'] == 1

        explained = tmp_path / "explain"
        image = next(dataset.parent.glob("images/*.png"))
        assert main([*common, 'explain', str(image), '--tap', 'aspp', '--weights',
                     str(weights / "segmenter.nwb"), '-o', str(explained)]) == EXIT_OK
        assert len(list(explained.iterdir())) == 2
