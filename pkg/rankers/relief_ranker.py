import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from core.dataset import Dataset, SplitMix64
from core.errors import ReliefError
from rankers import FeatureRanking, Ranker, RankerSettings, rank_by_scores

logger = logging.getLogger('bandsel.relief')


@dataclass
class ReliefWeights:
    W: np.ndarray
    iterations: int
    seed: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.W)):
            raise ReliefError("RELIEF weights must be finite")


def draw_instances(n_samples: int, m: int, seed: int) -> List[int]:
    """Seeded permutations of the sample indices laid end to end, cut to m draws."""
    rng = SplitMix64(seed)
    draws: List[int] = []
    while len(draws) < m:
        draws.extend(rng.permutation(n_samples).tolist())
    return draws[:m]


def relief_weights(train: Dataset, m: Optional[int] = None, seed: int = 0,
                   instances: Optional[Sequence[int]] = None) -> ReliefWeights:
    """Kira-Rendell RELIEF: per draw, subtract the squared gap to the nearest hit and add the one to the nearest miss."""
    counts = train.class_counts()
    if len(counts) < 2:
        raise ReliefError("RELIEF needs at least two classes to find a near miss")

    X = train.samples
    labels = train.labels
    if instances is None:
        m = train.n_samples if m is None else int(m)
        if m < 1:
            raise ReliefError(f"iteration count must be positive, got {m}")
        checked = list(counts)
        instances = draw_instances(train.n_samples, m, seed)
    else:
        instances = [int(i) for i in instances]
        checked = sorted({int(labels[i]) for i in instances})
    for class_id in checked:
        if counts[class_id] < 2:
            raise ReliefError(f"class {class_id} ({train.class_name(class_id)}) has {counts[class_id]} training sample; "
                              f"RELIEF needs at least 2 samples per class")

    W = np.zeros(train.band_count)
    for i in instances:
        distances = ((X - X[i]) ** 2).sum(axis=1)
        same = labels == labels[i]
        hit_pool = same.copy()
        hit_pool[i] = False
        hit = int(np.flatnonzero(hit_pool)[np.argmin(distances[hit_pool])])
        miss = int(np.flatnonzero(~same)[np.argmin(distances[~same])])
        W += (X[i] - X[miss]) ** 2 - (X[i] - X[hit]) ** 2

    logger.debug(f"RELIEF: {len(instances)} draws over {train.n_samples} samples, seed {seed}")
    return ReliefWeights(W=W, iterations=len(instances), seed=seed)


def rank_relief(weights: ReliefWeights) -> FeatureRanking:
    return rank_by_scores(weights.W, "relief")


class ReliefRanker(Ranker):
    name = "relief"

    def rank(self, train: Dataset, k: int, settings: RankerSettings) -> FeatureRanking:
        return rank_relief(relief_weights(train, settings.relief_iters, settings.seed))


def setup(registry):
    registry.add_ranker(ReliefRanker())
