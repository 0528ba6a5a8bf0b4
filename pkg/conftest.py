import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from core.dataset import Dataset  # noqa: E402


def make_toy_dataset(per_class: int = 12, seed: int = 7) -> Dataset:
    """Three classes over four bands: band 1 separates all classes, band 2 weakly, bands 3-4 are noise."""
    rng = np.random.default_rng(seed)
    samples, labels = [], []
    for class_id, (center_1, center_2) in enumerate([(0.1, 0.3), (0.5, 0.5), (0.9, 0.7)], start=1):
        block = np.column_stack([
            center_1 + rng.uniform(-0.05, 0.05, per_class),
            center_2 + rng.uniform(-0.2, 0.2, per_class),
            rng.uniform(0, 1, per_class),
            rng.uniform(0, 1, per_class),
        ])
        samples.append(block)
        labels.extend([class_id] * per_class)
    return Dataset(samples=np.vstack(samples), labels=np.asarray(labels),
                   class_names={1: "low", 2: "mid", 3: "high"})


@pytest.fixture
def toy_dataset() -> Dataset:
    return make_toy_dataset()


@pytest.fixture
def toy_csv(tmp_path, toy_dataset) -> str:
    from core.dataset import save_csv
    path = tmp_path / "toy.csv"
    save_csv(toy_dataset, str(path))
    return str(path)
