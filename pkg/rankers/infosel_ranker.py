"""Plug-in mutual information over equal-width bins and the greedy MRMR, JMI and CMIM selectors."""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence, Set, Tuple

import numpy as np

from core.dataset import Dataset
from rankers import FeatureRanking, Ranker, RankerSettings

logger = logging.getLogger('bandsel.infosel')

DEFAULT_BINS = 16


@dataclass
class DiscretizedData:
    codes: np.ndarray  # (N, D) integers in 0..bin_count-1
    bin_count: int
    edges: List[np.ndarray]

    def __post_init__(self):
        if self.codes.size and (self.codes.min() < 0 or self.codes.max() >= self.bin_count):
            raise ValueError(f"bin codes must lie in 0..{self.bin_count - 1}")
        for band, e in enumerate(self.edges):
            if np.any(np.diff(e) <= 0):
                raise ValueError(f"bin edges of band {band + 1} are not strictly increasing")

    @property
    def band_count(self) -> int:
        return self.codes.shape[1]

    def band(self, j: int) -> np.ndarray:
        return self.codes[:, j]


def discretize(d: Dataset, bins: int = DEFAULT_BINS) -> DiscretizedData:
    """Equal-width bins over each band's [min, max]; the top bin is closed on the right."""
    if bins < 2:
        raise ValueError(f"bin count must be at least 2, got {bins}")
    X = d.samples
    codes = np.zeros(X.shape, dtype=np.int64)
    edges = []
    for j in range(X.shape[1]):
        lo, hi = float(X[:, j].min()), float(X[:, j].max())
        if hi > lo:
            edges.append(np.linspace(lo, hi, bins + 1))
            scaled = np.floor((X[:, j] - lo) / (hi - lo) * bins).astype(np.int64)
            codes[:, j] = np.clip(scaled, 0, bins - 1)
        else:
            edges.append(lo + np.arange(bins + 1, dtype=np.float64))
    return DiscretizedData(codes=codes, bin_count=bins, edges=edges)


# --- Estimators ---
def entropy(*variables: np.ndarray) -> float:
    """Joint plug-in entropy in bits of one or more equally long code vectors."""
    stacked = np.column_stack([np.asarray(v).reshape(-1) for v in variables])
    _, counts = np.unique(stacked, axis=0, return_counts=True)
    p = counts / stacked.shape[0]
    return -math.fsum((p * np.log2(p)).tolist())


def _check_lengths(*variables: np.ndarray):
    lengths = {len(v) for v in variables}
    if len(lengths) != 1 or 0 in lengths:
        raise ValueError(f"code vectors must be non-empty and equally long, got lengths {sorted(lengths)}")


def mutual_info(x: np.ndarray, y: np.ndarray) -> float:
    _check_lengths(x, y)
    return entropy(x) + entropy(y) - entropy(x, y)


def conditional_mi(x: np.ndarray, y: np.ndarray, z: np.ndarray) -> float:
    """I(X;Y|Z) = H(X,Z) + H(Y,Z) - H(X,Y,Z) - H(Z)."""
    _check_lengths(x, y, z)
    return entropy(x, z) + entropy(y, z) - entropy(x, y, z) - entropy(z)


def joint_code(a: np.ndarray, b: np.ndarray, bins: int) -> np.ndarray:
    """The paired variable of two banded codes, a * bins + b."""
    return np.asarray(a, dtype=np.int64) * bins + np.asarray(b, dtype=np.int64)


# --- Greedy selection ---
@dataclass
class SelectorState:
    selected: List[int] = field(default_factory=list)
    remaining: Set[int] = field(default_factory=set)
    relevance: Dict[int, float] = field(default_factory=dict)
    pair_terms: Dict[Tuple[int, int], float] = field(default_factory=dict)
    accumulated: Dict[int, float] = field(default_factory=dict)

    def pick(self, band: int):
        self.selected.append(band)
        self.remaining.discard(band)
        self.accumulated.pop(band, None)


def _argmax_lowest(candidates: Sequence[int], values: Dict[int, float]) -> int:
    best = None
    for band in sorted(candidates):
        if best is None or values[band] > values[best]:
            best = band
    return best


def _greedy(dd: DiscretizedData, labels: np.ndarray, k: int, method: str,
            pair_term: Callable[[int, int], float], combine: Callable[[float, float], float],
            criterion: Callable[[SelectorState, int], float], n_workers: int = 1) -> FeatureRanking:
    D = dd.band_count
    if not 1 <= k <= D:
        raise ValueError(f"{method}: k must lie in 1..{D}, got {k}")
    labels = np.asarray(labels)
    state = SelectorState(remaining=set(range(D)))
    state.relevance = {j: mutual_info(dd.band(j), labels) for j in range(D)}

    first = _argmax_lowest(state.remaining, state.relevance)
    state.pick(first)
    scores = [state.relevance[first]]

    pool = ThreadPoolExecutor(max_workers=n_workers) if n_workers > 1 else None
    try:
        while len(state.selected) < k:
            newest = state.selected[-1]
            candidates = sorted(state.remaining)
            terms = list(pool.map(lambda c: pair_term(c, newest), candidates)) if pool \
                else [pair_term(c, newest) for c in candidates]
            for c, term in zip(candidates, terms):
                state.pair_terms[(c, newest)] = term
                state.accumulated[c] = term if c not in state.accumulated else combine(state.accumulated[c], term)
            values = {c: criterion(state, c) for c in candidates}
            chosen = _argmax_lowest(candidates, values)
            state.pick(chosen)
            scores.append(values[chosen])
    finally:
        if pool:
            pool.shutdown()

    logger.debug(f"{method}: selected bands {[j + 1 for j in state.selected]}")
    return FeatureRanking(order=state.selected, scores=scores, method=method, greedy=True)


def select_mrmr(dd: DiscretizedData, labels: np.ndarray, k: int, n_workers: int = 1) -> FeatureRanking:
    """Relevance minus mean redundancy with the already selected bands."""
    return _greedy(
        dd, labels, k, "mrmr",
        pair_term=lambda c, j: mutual_info(dd.band(c), dd.band(j)),
        combine=lambda acc, term: acc + term,
        criterion=lambda s, c: s.relevance[c] - s.accumulated[c] / len(s.selected),
        n_workers=n_workers,
    )


def select_jmi(dd: DiscretizedData, labels: np.ndarray, k: int, n_workers: int = 1) -> FeatureRanking:
    """Sum over selected bands of the information the candidate-band pair carries about the labels."""
    labels = np.asarray(labels)
    return _greedy(
        dd, labels, k, "jmi",
        pair_term=lambda c, j: mutual_info(joint_code(dd.band(c), dd.band(j), dd.bin_count), labels),
        combine=lambda acc, term: acc + term,
        criterion=lambda s, c: s.accumulated[c],
        n_workers=n_workers,
    )


def select_cmim(dd: DiscretizedData, labels: np.ndarray, k: int, n_workers: int = 1) -> FeatureRanking:
    """Worst-case information about the labels given any one selected band."""
    labels = np.asarray(labels)
    return _greedy(
        dd, labels, k, "cmim",
        pair_term=lambda c, j: conditional_mi(dd.band(c), labels, dd.band(j)),
        combine=min,
        criterion=lambda s, c: s.accumulated[c],
        n_workers=n_workers,
    )


class _InfoselRanker(Ranker):
    greedy = True
    select: Callable = None

    def rank(self, train: Dataset, k: int, settings: RankerSettings) -> FeatureRanking:
        dd = discretize(train, settings.bins)
        return type(self).select(dd, train.labels, k, settings.n_workers)


class MrmrRanker(_InfoselRanker):
    name = "mrmr"
    select = staticmethod(select_mrmr)


class JmiRanker(_InfoselRanker):
    name = "jmi"
    select = staticmethod(select_jmi)


class CmimRanker(_InfoselRanker):
    name = "cmim"
    select = staticmethod(select_cmim)


def setup(registry):
    registry.add_ranker(MrmrRanker())
    registry.add_ranker(JmiRanker())
    registry.add_ranker(CmimRanker())
