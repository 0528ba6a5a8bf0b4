"""Band rankers, loaded as extensions from a list of module names.

Every ranker module exposes ``setup(registry)`` which registers one or more
:class:`Ranker` instances on a :class:`RankerRegistry`.
"""
import importlib
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from core.dataset import Dataset
from core.errors import ConfigError
from core.lpcore import PricingRule

logger = logging.getLogger('bandsel.rankers')

INITIAL_EXTENSIONS = [
    'rankers.mcm_ranker',
    'rankers.infosel_ranker',
    'rankers.relief_ranker',
    'rankers.pca_ranker',
]


@dataclass
class FeatureRanking:
    order: List[int]  # 0-based columns, best first
    scores: List[float]
    method: str
    greedy: bool = False
    parameters: Dict[str, float] = field(default_factory=dict)  # fitted settings worth recording, e.g. mcm_c

    def __post_init__(self):
        self.order = [int(i) for i in self.order]
        self.scores = [float(s) for s in self.scores]
        if len(self.order) != len(self.scores):
            raise ValueError(f"{len(self.order)} bands ranked with {len(self.scores)} scores")
        if len(set(self.order)) != len(self.order):
            raise ValueError(f"{self.method} ranking repeats a band")
        if self.order and min(self.order) < 0:
            raise ValueError("band indices must be nonnegative")
        if not self.greedy and any(a < b for a, b in zip(self.scores, self.scores[1:])):
            raise ValueError(f"{self.method} scores must be non-increasing along the ranking")

    def __len__(self) -> int:
        return len(self.order)

    def top(self, k: int) -> List[int]:
        if k > len(self.order):
            raise ValueError(f"{self.method} ranked {len(self.order)} bands, {k} requested")
        return self.order[:k]

    def band_numbers(self, k: Optional[int] = None) -> List[int]:
        """1-based band numbers as written to tables."""
        order = self.order if k is None else self.top(k)
        return [i + 1 for i in order]


def rank_by_scores(scores: Sequence[float], method: str) -> FeatureRanking:
    """Descending by score; equal scores keep the lower band first."""
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind='stable')
    return FeatureRanking(order=order.tolist(), scores=scores[order].tolist(), method=method)


@dataclass
class RankerSettings:
    mcm_c: float = 10.0
    mcm_c_grid: List[float] = field(default_factory=lambda: [0.1, 1.0, 10.0, 100.0])
    mcm_select_c: bool = False
    mcm_max_negatives: Optional[int] = None
    lp_pricing: PricingRule = PricingRule.DANTZIG
    bins: int = 16
    relief_iters: Optional[int] = None
    seed: int = 0
    n_workers: int = 1
    dump_lp_dir: Optional[str] = None


class Ranker:
    """Base class; subclasses set ``name`` and implement :meth:`rank`."""

    name: str = ""
    greedy: bool = False

    def rank(self, train: Dataset, k: int, settings: RankerSettings) -> FeatureRanking:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"


class RankerRegistry:
    def __init__(self):
        self._rankers: Dict[str, Ranker] = {}
        self.extensions: List[str] = []

    def add_ranker(self, ranker: Ranker):
        if ranker.name in self._rankers:
            raise ConfigError(f"ranker '{ranker.name}' is already registered")
        self._rankers[ranker.name] = ranker
        logger.debug(f"Registered ranker {ranker.name}")

    def get(self, name: str) -> Ranker:
        try:
            return self._rankers[name]
        except KeyError:
            raise ConfigError(f"unknown method '{name}', known methods: {', '.join(self.names())}") from None

    def names(self) -> List[str]:
        return list(self._rankers)

    def __contains__(self, name: str) -> bool:
        return name in self._rankers

    def load_extension(self, name: str):
        module = importlib.import_module(name)
        setup = getattr(module, 'setup', None)
        if setup is None:
            raise ConfigError(f"extension {name} has no setup(registry) function")
        setup(self)
        self.extensions.append(name)


def build_registry(extensions: Optional[Sequence[str]] = None) -> RankerRegistry:
    registry = RankerRegistry()
    for extension in (INITIAL_EXTENSIONS if extensions is None else extensions):
        try:
            registry.load_extension(extension)
            logger.debug(f'Successfully loaded extension: {extension}')
        except Exception:
            logger.error(f'Failed to load extension {extension}.', exc_info=True)
    return registry
