import csv
import json
import logging
import math
import os
import re
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from core.errors import DatasetFormatError, SizeMismatchError

logger = logging.getLogger('bandsel.dataset')

# Presets file lives in the project root, next to main.py
PRESETS_FILE_PATH = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'dataset_presets.json')

CUBE_HEADER_REQUIRED_KEYS = ("rows", "cols", "bands", "labels")
BAND_HEADER_PATTERN = re.compile(r"^band_(\d+)$")


# --- Seeded shuffling ---
class SplitMix64:
    """64-bit splitmix generator; the single source of randomness for splits, draws and folds."""

    MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = int(seed) & self.MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & self.MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self.MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self.MASK
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        return (self.next_u64() * n) >> 64

    def shuffle(self, items: List) -> List:
        """Fisher-Yates in place, walking down from the last slot."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
        return items

    def permutation(self, n: int) -> np.ndarray:
        return np.asarray(self.shuffle(list(range(n))), dtype=np.int64)


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


# --- Domain types ---
@dataclass(frozen=True)
class Dataset:
    samples: np.ndarray
    labels: np.ndarray
    class_names: Optional[Dict[int, str]] = None
    band_ids: Optional[np.ndarray] = None
    source_indices: Optional[np.ndarray] = None
    discarded: int = 0

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        if samples.ndim != 2:
            raise DatasetFormatError(f"samples must be a 2-D matrix, got shape {samples.shape}")
        if samples.shape[0] == 0:
            raise DatasetFormatError("dataset has no labeled samples")
        if labels.shape[0] != samples.shape[0]:
            raise DatasetFormatError(f"{labels.shape[0]} labels for {samples.shape[0]} samples")
        if labels.min() < 1:
            raise DatasetFormatError(f"class labels must be >= 1, found {labels.min()}")
        if not np.all(np.isfinite(samples)):
            raise DatasetFormatError("samples contain NaN or Inf values")

        band_ids = np.arange(1, samples.shape[1] + 1) if self.band_ids is None else np.array(self.band_ids, dtype=np.int64)
        if band_ids.shape != (samples.shape[1],):
            raise DatasetFormatError(f"{band_ids.shape[0]} band ids for {samples.shape[1]} bands")
        source = np.arange(samples.shape[0]) if self.source_indices is None else np.array(self.source_indices, dtype=np.int64)

        object.__setattr__(self, 'samples', _readonly(samples))
        object.__setattr__(self, 'labels', _readonly(labels))
        object.__setattr__(self, 'band_ids', _readonly(band_ids))
        object.__setattr__(self, 'source_indices', _readonly(source))
        if self.class_names is not None:
            object.__setattr__(self, 'class_names', dict(self.class_names))

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def band_count(self) -> int:
        return self.samples.shape[1]

    @property
    def class_ids(self) -> np.ndarray:
        return np.unique(self.labels)

    @property
    def class_count(self) -> int:
        return len(self.class_ids)

    def class_counts(self) -> Dict[int, int]:
        ids, counts = np.unique(self.labels, return_counts=True)
        return {int(c): int(n) for c, n in zip(ids, counts)}

    def class_name(self, class_id: int) -> str:
        if self.class_names and class_id in self.class_names:
            return self.class_names[class_id]
        return f"class_{class_id}"

    def subset(self, indices: Sequence[int]) -> "Dataset":
        """Rows by position; provenance is kept in source_indices."""
        indices = np.asarray(indices, dtype=np.int64)
        return replace(self, samples=self.samples[indices], labels=self.labels[indices],
                       source_indices=self.source_indices[indices], discarded=0)

    def select_bands(self, columns: Sequence[int]) -> "Dataset":
        """Columns by 0-based position."""
        columns = np.asarray(columns, dtype=np.int64)
        return replace(self, samples=self.samples[:, columns], band_ids=self.band_ids[columns])


@dataclass(frozen=True)
class Split:
    train_indices: np.ndarray
    test_indices: np.ndarray
    ratio: float
    seed: int

    def check_disjoint(self):
        overlap = np.intersect1d(self.train_indices, self.test_indices)
        if overlap.size:
            raise AssertionError(f"train and test share {overlap.size} indices")


# --- CSV ingestion ---
def _parse_label(cell: str, line_number: int) -> int:
    try:
        value = float(cell)
    except ValueError:
        raise DatasetFormatError(f"label '{cell}' is not numeric", line_number)
    if not value.is_integer() or value < 0:
        raise DatasetFormatError(f"label '{cell}' is not a nonnegative integer", line_number)
    return int(value)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _is_header(row: List[str]) -> bool:
    """Only a row without any numeric field is a header; a partly numeric first row is data."""
    return not any(_is_number(cell) for cell in row)


def load_csv(path: str) -> Dataset:
    """D numeric columns then an integer label column; optional single header row; label 0 is dropped."""
    samples: List[List[float]] = []
    labels: List[int] = []
    band_ids: Optional[List[int]] = None
    width: Optional[int] = None
    discarded = 0
    seen_first_row = False

    with open(path, newline='', encoding='utf-8') as f:
        reader = csv.reader(f)
        for row in reader:
            line_number = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            row = [cell.strip() for cell in row]
            if not seen_first_row:
                seen_first_row = True
                if _is_header(row):
                    matches = [BAND_HEADER_PATTERN.match(cell) for cell in row[:-1]]
                    if all(matches):
                        band_ids = [int(m.group(1)) for m in matches]
                    width = len(row)
                    continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise DatasetFormatError("need at least one band column and a label column", line_number)
            if len(row) != width:
                raise DatasetFormatError(f"expected {width} columns, found {len(row)}", line_number)
            try:
                values = [float(cell) for cell in row[:-1]]
            except ValueError:
                raise DatasetFormatError("non-numeric band value", line_number)
            if not all(math.isfinite(v) for v in values):
                raise DatasetFormatError("NaN or Inf band value", line_number)
            label = _parse_label(row[-1], line_number)
            if label == 0:
                discarded += 1
                continue
            samples.append(values)
            labels.append(label)

    if not seen_first_row:
        raise DatasetFormatError(f"{path} is empty")
    if not samples:
        raise DatasetFormatError(f"{path} has no labeled rows ({discarded} unlabeled rows discarded)")

    logger.info(f"Loaded {len(samples)} labeled samples x {width - 1} bands from {path}; discarded {discarded} unlabeled rows")
    return Dataset(samples=np.asarray(samples), labels=np.asarray(labels), band_ids=band_ids, discarded=discarded)


def save_csv(d: Dataset, path: str):
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow([f"band_{b}" for b in d.band_ids] + ["label"])
        for row, label in zip(d.samples, d.labels):
            writer.writerow([format(v, '.17g') for v in row] + [int(label)])
    logger.info(f"Wrote {d.n_samples} samples x {d.band_count} bands to {path}")


# --- Raw cube ingestion ---
def read_cube_header(header_path: str) -> Dict[str, str]:
    header: Dict[str, str] = {}
    with open(header_path, encoding='utf-8') as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            if '=' not in line:
                raise DatasetFormatError(f"expected key=value, found '{line}'", line_number)
            key, value = line.split('=', 1)
            header[key.strip().lower()] = value.strip()
    missing = [k for k in CUBE_HEADER_REQUIRED_KEYS if k not in header]
    if missing:
        raise DatasetFormatError(f"{header_path} is missing header keys: {', '.join(missing)}")
    return header


def _check_size(path: str, expected: int):
    actual = os.path.getsize(path)
    if actual != expected:
        raise SizeMismatchError(path, expected, actual)


def load_raw_cube(data_path: str, header_path: str) -> Dataset:
    """Little-endian float32 BIP cube plus a uint16 label raster; keeps labeled pixels in row-major order."""
    header = read_cube_header(header_path)
    try:
        rows, cols, bands = int(header['rows']), int(header['cols']), int(header['bands'])
    except ValueError:
        raise DatasetFormatError(f"{header_path}: rows, cols and bands must be integers")

    label_path = header['labels']
    if not os.path.isabs(label_path):
        label_path = os.path.join(os.path.dirname(os.path.abspath(header_path)), label_path)

    _check_size(data_path, rows * cols * bands * 4)
    _check_size(label_path, rows * cols * 2)

    cube = np.fromfile(data_path, dtype='<f4').reshape(rows * cols, bands).astype(np.float64)
    raster = np.fromfile(label_path, dtype='<u2').astype(np.int64)
    keep = raster != 0
    if not np.all(np.isfinite(cube[keep])):
        raise DatasetFormatError(f"{data_path} has NaN or Inf values at labeled pixels")

    class_names = None
    if header.get('class_names'):
        class_names = {i + 1: name.strip() for i, name in enumerate(header['class_names'].split(','))}

    discarded = int((~keep).sum())
    logger.info(f"Loaded cube {rows}x{cols}x{bands} from {data_path}: {int(keep.sum())} labeled pixels, {discarded} background")
    return Dataset(samples=cube[keep], labels=raster[keep], class_names=class_names, discarded=discarded)


# --- Preprocessing ---
def normalize(d: Dataset) -> Dataset:
    """Per-band min-max to [0, 1] over the whole dataset; constant bands map to 0."""
    samples = d.samples
    lo = samples.min(axis=0)
    span = samples.max(axis=0) - lo
    scaled = np.zeros_like(samples)
    varying = span > 0
    scaled[:, varying] = (samples[:, varying] - lo[varying]) / span[varying]
    return replace(d, samples=scaled)


def drop_bands(d: Dataset, bands: Iterable[int]) -> Dataset:
    """Remove bands by their 1-based band id (the numbering in d.band_ids)."""
    drop = set(int(b) for b in bands)
    keep = [i for i, b in enumerate(d.band_ids) if int(b) not in drop]
    if not keep:
        raise DatasetFormatError("dropping these bands would leave no bands")
    return d.select_bands(keep)


def stratified_split(d: Dataset, ratio: float, seed: int) -> Split:
    """Per class keep round((1 - ratio) * size) samples for training, at least one, drawn by seeded Fisher-Yates."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"test ratio must lie in (0, 1), got {ratio}")
    rng = SplitMix64(seed)
    train: List[int] = []
    test: List[int] = []
    for class_id in d.class_ids:
        members = np.flatnonzero(d.labels == class_id).tolist()
        size = len(members)
        n_train = max(1, math.floor((1.0 - ratio) * size + 0.5 + 1e-9))
        if size == 1:
            logger.warning(f"Class {class_id} ({d.class_name(int(class_id))}) has a single sample; it goes to train and the class has no test samples")
        elif n_train >= size:
            n_train = size - 1
        rng.shuffle(members)
        train.extend(members[:n_train])
        test.extend(members[n_train:])
    return Split(train_indices=np.sort(np.asarray(train, dtype=np.int64)),
                 test_indices=np.sort(np.asarray(test, dtype=np.int64)),
                 ratio=ratio, seed=seed)


# --- Presets ---
def load_presets() -> Dict[str, Dict]:
    """Loads scene presets (class names, counts, water-absorption bands) from the JSON file."""
    try:
        with open(PRESETS_FILE_PATH, 'r', encoding='utf-8') as f:
            return json.load(f)
    except FileNotFoundError:
        logger.error(f"Presets file not found at {PRESETS_FILE_PATH}")
        return {}
    except json.JSONDecodeError:
        logger.error(f"Error decoding JSON from {PRESETS_FILE_PATH}; check the file for syntax errors")
        return {}


def removed_band_ids(preset: Dict) -> List[int]:
    bands: List[int] = []
    for first, last in preset.get('removed_bands', []):
        bands.extend(range(first, last + 1))
    return bands


def apply_preset(d: Dataset, name: str) -> Dataset:
    """Attach class names and, for a raw cube, drop the preset's water-absorption bands."""
    presets = load_presets()
    if name not in presets:
        raise DatasetFormatError(f"unknown preset '{name}'; known presets: {', '.join(sorted(presets))}")
    preset = presets[name]
    names = {i + 1: n for i, n in enumerate(preset['class_names'])}
    d = replace(d, class_names=names)
    if d.band_count == preset.get('raw_band_count'):
        d = drop_bands(d, removed_band_ids(preset))
        logger.info(f"Preset '{name}': removed water-absorption bands, {d.band_count} bands remain")

    expected = preset.get('class_counts')
    if expected:
        counts = d.class_counts()
        for class_id, want in enumerate(expected, start=1):
            got = counts.get(class_id, 0)
            if got != want:
                logger.warning(f"Preset '{name}': class {class_id} ({names.get(class_id)}) has {got} samples, table lists {want}")
    return d
