import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.dataset import Dataset, SplitMix64
from core.errors import McmError
from core.lpcore import Bound, LinearProgram, LpStatus, PricingRule, Relation, dump_lp, solve
from core.metrics import evaluate_predictions
from rankers import FeatureRanking, Ranker, RankerSettings, rank_by_scores

logger = logging.getLogger('bandsel.mcm')

RESIDUAL_TOL = 1e-7


@dataclass
class McmModel:
    w: np.ndarray
    b: float
    h: float
    C: float
    q: np.ndarray
    basis: Optional[np.ndarray] = field(default=None, repr=False)  # optimal LP basis, for warm starts

    @property
    def objective(self) -> float:
        return self.h + self.C * float(self.q.sum())

    def decision(self, samples: np.ndarray) -> np.ndarray:
        return np.asarray(samples, dtype=np.float64) @ self.w + self.b

    def residuals(self, samples: np.ndarray, targets: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Slack of h >= y(w.x+b)+q and of y(w.x+b)+q >= 1 at each sample; both nonnegative when feasible."""
        margin = np.asarray(targets) * self.decision(samples) + self.q
        return self.h - margin, margin - 1.0


def build_lp(samples: np.ndarray, targets: np.ndarray, C: float) -> LinearProgram:
    """Variables: w (free, one per band), b (free), h (free), q (nonnegative, one per sample)."""
    X = np.asarray(samples, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    M, D = X.shape
    n = D + 2 + M
    objective = np.zeros(n)
    objective[D + 1] = 1.0
    objective[D + 2:] = C

    yX = y[:, None] * X
    eye = np.eye(M)
    # h - y(w.x + b) - q >= 0
    upper = np.hstack([-yX, -y[:, None], np.ones((M, 1)), -eye])
    # y(w.x + b) + q >= 1
    lower = np.hstack([yX, y[:, None], np.zeros((M, 1)), eye])

    names = [f"w{j + 1}" for j in range(D)] + ["b", "h"] + [f"q{i + 1}" for i in range(M)]
    bounds = [Bound.FREE] * (D + 2) + [Bound.NONNEG] * M
    return LinearProgram(objective=objective, matrix=np.vstack([upper, lower]),
                         relations=[Relation.GE] * (2 * M), rhs=np.concatenate([np.zeros(M), np.ones(M)]),
                         bounds=bounds, names=names)


def fit_binary(samples: np.ndarray, targets: np.ndarray, C: float, dump_path: Optional[str] = None,
               pricing: PricingRule = PricingRule.DANTZIG, warm_basis: Optional[np.ndarray] = None) -> McmModel:
    """Solve the minimal complexity machine LP for +1/-1 targets.

    ``warm_basis`` is the ``basis`` of a model fitted on the same samples with another C; the
    constraints do not depend on C, so the solver can start from it without a phase one.
    """
    X = np.asarray(samples, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if not C > 0:
        raise McmError(f"C must be positive, got {C}")
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise McmError(f"{X.shape[0]} samples for {y.shape[0]} targets")
    if not set(np.unique(y).tolist()) == {-1.0, 1.0}:
        raise McmError("both +1 and -1 targets must be present")

    lp = build_lp(X, y, C)
    if dump_path:
        dump_lp(lp, dump_path)
    solution = solve(lp, pricing=pricing, basis=warm_basis)
    if solution.status is LpStatus.UNBOUNDED:
        raise McmError(f"MCM LP is unbounded for C={C}")
    if solution.status is LpStatus.INFEASIBLE:
        raise McmError(f"MCM LP reported infeasible for C={C}; this indicates a solver fault")

    D = X.shape[1]
    v = solution.values
    model = McmModel(w=v[:D].copy(), b=float(v[D]), h=float(v[D + 1]), C=C, q=v[D + 2:].copy(),
                     basis=solution.basis)
    logger.debug(f"MCM fit: {X.shape[0]} samples, {D} bands, C={C}, h={model.h:.6g}, "
                 f"objective {model.objective:.6g}, {solution.iterations} pivots")
    return model


def rank_bands(model: McmModel) -> FeatureRanking:
    scores = np.abs(model.w)
    if not np.any(scores > 0):
        logger.warning("MCM weight vector is all zero; ranking falls back to band order")
    ranking = rank_by_scores(scores, "mcm")
    ranking.parameters["mcm_c"] = model.C
    return ranking


def _negative_subsample(indices: np.ndarray, limit: Optional[int], seed: int) -> np.ndarray:
    if limit is None or indices.size <= limit:
        return indices
    keep = SplitMix64(seed).permutation(indices.size)[:limit]
    return np.sort(indices[keep])


def fit_one_vs_rest(train: Dataset, C: float, n_workers: int = 1, max_negatives: Optional[int] = None,
                    seed: int = 0, dump_lp_dir: Optional[str] = None, pricing: PricingRule = PricingRule.DANTZIG,
                    warm_start: Optional[Sequence[McmModel]] = None) -> List[McmModel]:
    """One binary MCM per class in ascending class order.

    ``warm_start`` holds earlier models for the same train set, max_negatives and seed, one per class.
    """
    class_ids = [int(c) for c in train.class_ids]
    if len(class_ids) < 2:
        raise McmError(f"one-vs-rest MCM needs at least two classes, got {class_ids}")
    if warm_start is not None and len(warm_start) != len(class_ids):
        raise McmError(f"{len(warm_start)} warm-start models for {len(class_ids)} classes")
    previous = dict(zip(class_ids, warm_start)) if warm_start is not None else {}

    def fit(class_id: int) -> McmModel:
        positive = np.flatnonzero(train.labels == class_id)
        negative = _negative_subsample(np.flatnonzero(train.labels != class_id), max_negatives, seed + class_id)
        rows = np.concatenate([positive, negative])
        y = np.where(train.labels[rows] == class_id, 1.0, -1.0)
        dump_path = os.path.join(dump_lp_dir, f"mcm_class_{class_id}.lp") if dump_lp_dir else None
        warm = previous[class_id].basis if class_id in previous else None
        try:
            return fit_binary(train.samples[rows], y, C, dump_path=dump_path, pricing=pricing, warm_basis=warm)
        except McmError as e:
            raise McmError(f"class {class_id} ({train.class_name(class_id)}): {e}") from e

    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            return list(pool.map(fit, class_ids))
    return [fit(c) for c in class_ids]


def aggregate_ranking(models: Sequence[McmModel]) -> FeatureRanking:
    """Per band, the sum of |w| over the one-vs-rest models, added in class order."""
    scores = np.zeros_like(models[0].w)
    for model in models:
        scores = scores + np.abs(model.w)
    if not np.any(scores > 0):
        logger.warning("Every one-vs-rest MCM weight vector is zero; ranking falls back to band order")
    ranking = rank_by_scores(scores, "mcm")
    ranking.parameters["mcm_c"] = models[0].C
    return ranking


def rank_bands_multiclass(train: Dataset, C: float, n_workers: int = 1, max_negatives: Optional[int] = None,
                          seed: int = 0, dump_lp_dir: Optional[str] = None,
                          pricing: PricingRule = PricingRule.DANTZIG) -> FeatureRanking:
    return aggregate_ranking(fit_one_vs_rest(train, C, n_workers, max_negatives, seed, dump_lp_dir, pricing))


def select_c(train: Dataset, grid: Sequence[float], n_workers: int = 1, max_negatives: Optional[int] = None,
             seed: int = 0, dump_lp_dir: Optional[str] = None,
             pricing: PricingRule = PricingRule.DANTZIG) -> Tuple[float, List[McmModel]]:
    """Pick C by training-set weighted MCC of the argmax of w.x + b; ties keep the smaller C.

    Each C starts from the optimal bases of the previous one. With ``dump_lp_dir`` the LPs of
    every C go to a ``C_<value>`` subdirectory.
    """
    class_ids = [int(c) for c in train.class_ids]
    best: Optional[Tuple[float, List[McmModel]]] = None
    best_score = -np.inf
    models: Optional[List[McmModel]] = None
    for C in sorted(grid):
        dump_dir = None
        if dump_lp_dir:
            dump_dir = os.path.join(dump_lp_dir, f"C_{C:g}")
            os.makedirs(dump_dir, exist_ok=True)
        models = fit_one_vs_rest(train, C, n_workers, max_negatives, seed, dump_dir, pricing, warm_start=models)
        scores = np.column_stack([m.decision(train.samples) for m in models])
        predicted = np.asarray(class_ids)[np.argmax(scores, axis=1)]
        weighted = evaluate_predictions(train.labels, predicted, class_ids).weighted
        logger.debug(f"MCM C={C}: training weighted MCC {weighted:.4f}")
        if weighted > best_score:
            best, best_score = (C, models), weighted
    logger.info(f"Selected MCM C={best[0]} (training weighted MCC {best_score:.4f})")
    return best


class McmRanker(Ranker):
    name = "mcm"

    def rank(self, train: Dataset, k: int, settings: RankerSettings) -> FeatureRanking:
        if settings.mcm_select_c:
            _, models = select_c(train, settings.mcm_c_grid, settings.n_workers, settings.mcm_max_negatives,
                                 settings.seed, settings.dump_lp_dir, settings.lp_pricing)
        else:
            models = fit_one_vs_rest(train, settings.mcm_c, settings.n_workers, settings.mcm_max_negatives,
                                     settings.seed, settings.dump_lp_dir, settings.lp_pricing)
        return aggregate_ranking(models)


def setup(registry):
    registry.add_ranker(McmRanker())
