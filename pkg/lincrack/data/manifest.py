"""
Dataset Manifests

A manifest is delimited text: ``#`` comment lines holding YAML metadata,
a header row (image_path, label, mask_path, split) and one record per line.
Paths are stored relative to the manifest's directory.
"""

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from lincrack.constants import (
    BACKGROUND,
    CLASS_NAMES,
    CRACK,
    DEFAULT_SEED,
    DEFAULT_SPLIT_RATIOS,
    SPLIT_NAMES,
)
from lincrack.core.exceptions import ConfigurationError, DataError, SplitError
from lincrack.utils.logger import get_logger

logger = get_logger(__name__)

MANIFEST_COLUMNS = ('image_path', 'label', 'mask_path', 'split')


def parse_label(value: Union[int, str]) -> int:
    """Accept 0/1 or the class names 'background'/'crack'."""
    if isinstance(value, str):
        text = value.strip().lower()
        if text in CLASS_NAMES:
            return CLASS_NAMES.index(text)
        if text.isdigit():
            value = int(text)
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool) and value in (BACKGROUND, CRACK):
        return int(value)
    raise DataError(f"unknown label {value!r}; expected one of {CLASS_NAMES} or 0/1")


@dataclass
class SampleRecord:
    """One image, its class and optionally its mask and split."""
    image_path: str
    label: int
    mask_path: Optional[str] = None
    split: Optional[str] = None

    def __post_init__(self):
        self.image_path = str(self.image_path)
        self.label = parse_label(self.label)
        self.mask_path = str(self.mask_path) if self.mask_path else None
        self.split = self.split or None
        if self.split is not None and self.split not in SPLIT_NAMES:
            raise SplitError(f"unknown split {self.split!r}; expected one of {SPLIT_NAMES}")

    @property
    def label_name(self) -> str:
        return CLASS_NAMES[self.label]

    @property
    def is_crack(self) -> bool:
        return self.label == CRACK


@dataclass
class SampleManifest:
    """Ordered records plus source metadata (dataset, seed, ratios, sizes)."""
    records: List[SampleRecord] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)
    root: Optional[Path] = None

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[SampleRecord]:
        return iter(self.records)

    def resolve(self, path: Optional[str]) -> Optional[Path]:
        """Absolute path of a record path (relative paths are taken from ``root``)."""
        if path is None:
            return None
        path = Path(path)
        if path.is_absolute() or self.root is None:
            return path
        return self.root / path

    def by_split(self, split: str) -> List[SampleRecord]:
        if split not in SPLIT_NAMES:
            raise SplitError(f"unknown split {split!r}; expected one of {SPLIT_NAMES}")
        return [r for r in self.records if r.split == split]

    def with_label(self, label: Union[int, str]) -> List[SampleRecord]:
        label = parse_label(label)
        return [r for r in self.records if r.label == label]

    def split_counts(self) -> Dict[str, Dict[str, int]]:
        """{split: {class name: count}} for every split present."""
        counts: Dict[str, Dict[str, int]] = {}
        for record in self.records:
            bucket = counts.setdefault(record.split or 'unassigned', {name: 0 for name in CLASS_NAMES})
            bucket[record.label_name] += 1
        return counts

    def validate_partition(self) -> None:
        """Every record belongs to exactly one of train/val/test, no path twice."""
        missing = [r.image_path for r in self.records if r.split is None]
        if missing:
            raise SplitError(f"{len(missing)} records have no split, e.g. {missing[0]}")
        seen = set()
        for record in self.records:
            if record.image_path in seen:
                raise SplitError(f"record {record.image_path} appears more than once")
            seen.add(record.image_path)

    def validate_for_segmentation(self) -> None:
        """Crack records must carry a mask path."""
        unmasked = [r.image_path for r in self.records if r.is_crack and not r.mask_path]
        if unmasked:
            raise DataError(f"{len(unmasked)} crack records have no mask, e.g. {unmasked[0]}")

    def save(self, path: Union[str, Path]) -> Path:
        """Write the manifest; metadata goes into leading comment lines."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='') as f:
            if self.metadata:
                meta = yaml.safe_dump(self.metadata, default_flow_style=True, sort_keys=True, width=10_000)
                for line in meta.strip().splitlines():
                    f.write(f"# {line}\n")
            writer = csv.writer(f)
            writer.writerow(MANIFEST_COLUMNS)
            for r in self.records:
                writer.writerow([r.image_path, r.label_name, r.mask_path or '', r.split or ''])
        logger.debug(f"Manifest with {len(self.records)} records saved to {path}")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'SampleManifest':
        """
        Read a manifest written by save.

        Raises:
            DataError: If the file is missing or malformed
        """
        path = Path(path)
        if not path.exists():
            raise DataError(f"manifest not found: {path}")
        with open(path, 'r', newline='') as f:
            lines = f.read().splitlines()

        comments = [line[1:].strip() for line in lines if line.startswith('#')]
        body = [line for line in lines if line.strip() and not line.startswith('#')]
        try:
            metadata = yaml.safe_load("\n".join(comments)) if comments else {}
        except yaml.YAMLError as e:
            raise DataError(f"malformed manifest metadata in {path}: {e}") from e

        reader = csv.DictReader(body)
        if reader.fieldnames is None or tuple(reader.fieldnames) != MANIFEST_COLUMNS:
            raise DataError(f"manifest {path} must have header {','.join(MANIFEST_COLUMNS)}")
        records = []
        for line_no, row in enumerate(reader, start=2):
            try:
                records.append(SampleRecord(row['image_path'], row['label'], row['mask_path'], row['split']))
            except DataError as e:
                raise DataError(f"{path} record {line_no}: {e}") from e
        return cls(records, metadata or {}, root=path.parent)


def validate_ratios(ratios: Sequence[float]) -> Tuple[float, float, float]:
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ConfigurationError(f"split ratios must be three positive values summing to 1, got {ratios}")
    return ratios


def split_sizes(n: int, ratios: Sequence[float]) -> Tuple[int, int, int]:
    """floor(n·train), floor(n·val), remainder to test."""
    train = math.floor(n * ratios[0] + 1e-9)
    val = math.floor(n * ratios[1] + 1e-9)
    return train, val, n - train - val


def stratified_split(
    records: Sequence[SampleRecord],
    ratios: Sequence[float] = DEFAULT_SPLIT_RATIOS,
    seed: int = DEFAULT_SEED,
    classes: Sequence[int] = (BACKGROUND, CRACK),
    metadata: Optional[Dict[str, Any]] = None,
) -> SampleManifest:
    """
    Assign train/val/test per class with a seeded shuffle.

    Each class is permuted by one generator (classes in ascending order);
    the first floor(n·r_train) go to train, the next floor(n·r_val) to val,
    the remainder to test. Record order is preserved in the result.

    Raises:
        ConfigurationError: If ratios are invalid
        SplitError: If a requested class has no records
    """
    ratios = validate_ratios(ratios)
    rng = np.random.default_rng(seed)
    assigned: Dict[int, str] = {}
    for label in sorted(set(parse_label(c) for c in classes)):
        members = [i for i, r in enumerate(records) if r.label == label]
        if not members:
            raise SplitError(f"class {CLASS_NAMES[label]} has no records")
        order = rng.permutation(len(members))
        n_train, n_val, _ = split_sizes(len(members), ratios)
        for rank, position in enumerate(order):
            split = 'train' if rank < n_train else 'val' if rank < n_train + n_val else 'test'
            assigned[members[position]] = split

    stray = [r.image_path for i, r in enumerate(records) if i not in assigned]
    if stray:
        raise SplitError(f"{len(stray)} records belong to no requested class, e.g. {stray[0]}")

    meta = dict(metadata or {})
    meta.update({'seed': seed, 'ratios': list(ratios)})
    manifest = SampleManifest([replace(r, split=assigned[i]) for i, r in enumerate(records)], meta)
    logger.info(f"Split {len(records)} records: {manifest.split_counts()}")
    return manifest
