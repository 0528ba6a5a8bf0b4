import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from core.errors import MetricsError

logger = logging.getLogger('bandsel.metrics')


class Weighting(str, Enum):
    TEST = "test"
    TRAIN = "train"
    TOTAL = "total"


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise MetricsError(f"confusion counts must be nonnegative: {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def mcc(c: ConfusionCounts) -> float:
    """Matthews correlation with the square-root denominator; any zero marginal gives 0."""
    factors = ((c.tp + c.fp), (c.tp + c.fn), (c.tn + c.fp), (c.tn + c.fn))
    if any(f == 0 for f in factors):
        return 0.0
    numerator = c.tp * c.tn - c.fp * c.fn
    # integer product first, so scaling all counts by k leaves the value unchanged
    return numerator / math.sqrt(factors[0] * factors[1] * factors[2] * factors[3])


def weighted_mcc(per_class: Sequence[float], sizes: Sequence[float]) -> float:
    if len(per_class) != len(sizes):
        raise MetricsError(f"{len(per_class)} MCC values for {len(sizes)} class sizes")
    sizes = np.asarray(sizes, dtype=np.float64)
    if np.any(sizes < 0):
        raise MetricsError("class sizes must be nonnegative")
    total = sizes.sum()
    if total <= 0:
        raise MetricsError("all class sizes are zero; weighted MCC is undefined")
    return float(np.dot(sizes / total, np.asarray(per_class, dtype=np.float64)))


def one_vs_rest_counts(truth: np.ndarray, predicted: np.ndarray, class_id: int) -> ConfusionCounts:
    positive = truth == class_id
    called = predicted == class_id
    return ConfusionCounts(tp=int(np.sum(positive & called)), fp=int(np.sum(~positive & called)),
                           tn=int(np.sum(~positive & ~called)), fn=int(np.sum(positive & ~called)))


@dataclass
class McReport:
    class_ids: List[int]
    class_names: List[str]
    sizes: List[int]
    per_class: List[float]
    weights: List[float]
    weighted: float

    def as_dict(self) -> Dict[int, float]:
        return dict(zip(self.class_ids, self.per_class))


def evaluate_predictions(truth: np.ndarray, predicted: np.ndarray, class_ids: Sequence[int],
                         weight_sizes: Optional[Sequence[int]] = None,
                         class_names: Optional[Dict[int, str]] = None) -> McReport:
    """Per-class one-vs-rest MCC and the size-weighted average; sizes default to the evaluated set."""
    truth = np.asarray(truth)
    predicted = np.asarray(predicted)
    class_ids = [int(c) for c in class_ids]
    per_class = [mcc(one_vs_rest_counts(truth, predicted, c)) for c in class_ids]
    if weight_sizes is None:
        weight_sizes = [int(np.sum(truth == c)) for c in class_ids]
    sizes = [int(s) for s in weight_sizes]
    total = sum(sizes)
    if total <= 0:
        raise MetricsError("all class sizes are zero; weighted MCC is undefined")
    names = [(class_names or {}).get(c, f"class_{c}") for c in class_ids]
    return McReport(class_ids=class_ids, class_names=names, sizes=sizes, per_class=per_class,
                    weights=[s / total for s in sizes], weighted=weighted_mcc(per_class, sizes))


def write_report_csv(report: McReport, path: str):
    """Rows are classes (name, size, mcc); the last row carries the weighted average."""
    frame = pd.DataFrame({"name": report.class_names, "size": report.sizes, "mcc": report.per_class})
    footer = pd.DataFrame({"name": ["Weighted Average"], "size": [sum(report.sizes)], "mcc": [report.weighted]})
    pd.concat([frame, footer], ignore_index=True).to_csv(path, index=False, float_format="%.6f")
    logger.info(f"Wrote MCC report ({len(report.class_ids)} classes, weighted {report.weighted:.4f}) to {path}")
