"""Soft-margin kernel SVM trained by SMO, and the one-vs-rest classifier built on it."""
import json
import logging
import os
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np

from core.dataset import Dataset, SplitMix64
from core.errors import SvmError
from core.metrics import evaluate_predictions

logger = logging.getLogger('bandsel.svm')

KKT_TOL = 1e-3
MAX_PAIR_UPDATES = 1_000_000
TAU = 1e-12
DEFAULT_CACHE_ROWS = int(os.getenv("BANDSEL_KERNEL_CACHE_ROWS", "4000"))
DEFAULT_GAMMA_GRID = (0.1, 0.5, 1.0, 2.0, 5.0)
MODEL_FORMAT_HEADER = "bandsel-ovr-model"
MODEL_FORMAT_VERSION = 1


class KernelKind(str, Enum):
    RBF = "rbf"
    LINEAR = "linear"


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind = KernelKind.RBF
    gamma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, 'kind', KernelKind(self.kind))
        if self.kind is KernelKind.RBF and not self.gamma > 0:
            raise SvmError(f"RBF kernel needs gamma > 0, got {self.gamma}")

    def __call__(self, U: np.ndarray, V: np.ndarray) -> np.ndarray:
        """Kernel matrix between the rows of U and the rows of V."""
        if self.kind is KernelKind.LINEAR:
            return U @ V.T
        sq = (U * U).sum(axis=1)[:, None] + (V * V).sum(axis=1)[None, :] - 2.0 * (U @ V.T)
        return np.exp(-self.gamma * np.maximum(sq, 0.0))


class KernelCache:
    """LRU cache of kernel rows K(x_i, X) over the training set."""

    def __init__(self, X: np.ndarray, kernel: KernelSpec, capacity: int = DEFAULT_CACHE_ROWS):
        self.X = X
        self.kernel = kernel
        self.capacity = max(2, capacity)
        self._rows: "OrderedDict[int, np.ndarray]" = OrderedDict()
        self.hits = 0
        self.misses = 0

    def row(self, i: int) -> np.ndarray:
        cached = self._rows.get(i)
        if cached is not None:
            self._rows.move_to_end(i)
            self.hits += 1
            return cached
        self.misses += 1
        values = self.kernel(self.X[i:i + 1], self.X)[0]
        self._rows[i] = values
        if len(self._rows) > self.capacity:
            self._rows.popitem(last=False)
        return values

    def diagonal(self) -> np.ndarray:
        if self.kernel.kind is KernelKind.RBF:
            return np.ones(self.X.shape[0])
        return (self.X * self.X).sum(axis=1)


@dataclass
class SvmModel:
    support_vectors: np.ndarray
    alphas: np.ndarray
    targets: np.ndarray  # +1 / -1 of each support vector
    bias: float
    kernel: KernelSpec
    C: float
    converged: bool = True
    iterations: int = 0
    support_indices: Optional[np.ndarray] = None  # rows of the training matrix, when known

    @property
    def dimension(self) -> int:
        return self.support_vectors.shape[1]


def _check_binary(y: np.ndarray):
    values = set(np.unique(y).tolist())
    if not values <= {-1, 1}:
        raise SvmError(f"binary targets must be +1/-1, found {sorted(values)}")
    if values != {-1, 1}:
        raise SvmError("both +1 and -1 targets must be present")


def train_binary(X: np.ndarray, y: np.ndarray, kernel: KernelSpec, C: float,
                 tol: float = KKT_TOL, max_updates: int = MAX_PAIR_UPDATES,
                 cache_rows: int = DEFAULT_CACHE_ROWS) -> SvmModel:
    """SMO with the maximal-violating-pair working set; the bias averages over free support vectors."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if C <= 0:
        raise SvmError(f"box constraint C must be positive, got {C}")
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise SvmError(f"{X.shape[0]} samples for {y.shape[0]} targets")
    _check_binary(y)

    n = X.shape[0]
    cache = KernelCache(X, kernel, cache_rows)
    QD = cache.diagonal()
    alpha = np.zeros(n)
    G = -np.ones(n)
    converged = False
    updates = 0

    while updates < max_updates:
        yG = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.flatnonzero(up)[np.argmax(yG[up])])
        j = int(np.flatnonzero(low)[np.argmin(yG[low])])
        if yG[i] - yG[j] < tol:
            converged = True
            break

        K_i = cache.row(i)
        K_j = cache.row(j)
        Q_i = y[i] * y * K_i
        Q_j = y[j] * y * K_j
        old_i, old_j = alpha[i], alpha[j]

        if y[i] != y[j]:
            quad = QD[i] + QD[j] + 2.0 * Q_i[j]
            delta = (-G[i] - G[j]) / (quad if quad > 0 else TAU)
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            elif alpha[j] > C:
                alpha[j] = C
                alpha[i] = C + diff
        else:
            quad = QD[i] + QD[j] - 2.0 * Q_i[j]
            delta = (G[i] - G[j]) / (quad if quad > 0 else TAU)
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            elif alpha[j] < 0:
                alpha[j] = 0.0
                alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = total

        G += Q_i * (alpha[i] - old_i) + Q_j * (alpha[j] - old_j)
        updates += 1

    if not converged:
        logger.warning(f"SMO stopped at the cap of {max_updates} pair updates without reaching KKT tolerance {tol}")

    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(yG[free].mean())
    else:
        upper = ((y > 0) & (alpha >= C)) | ((y < 0) & (alpha <= 0))
        lower = ((y > 0) & (alpha <= 0)) | ((y < 0) & (alpha >= C))
        ub = yG[lower].min() if lower.any() else np.inf
        lb = yG[upper].max() if upper.any() else -np.inf
        rho = float((ub + lb) / 2.0) if np.isfinite(ub) and np.isfinite(lb) else float(ub if np.isfinite(ub) else lb)

    support = alpha > 0
    logger.debug(f"SMO: {updates} updates, {int(support.sum())} support vectors, cache hits {cache.hits} misses {cache.misses}")
    return SvmModel(support_vectors=X[support].copy(), alphas=alpha[support].copy(), targets=y[support].copy(),
                    bias=-rho, kernel=kernel, C=C, converged=converged, iterations=updates,
                    support_indices=np.flatnonzero(support))


def decision(model: SvmModel, x: np.ndarray) -> np.ndarray:
    """sum_i alpha_i y_i k(x_i, x) + b for one sample or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x.reshape(1, -1) if single else x
    if X.shape[1] != model.dimension:
        raise SvmError(f"sample has {X.shape[1]} bands, model was trained on {model.dimension}")
    if model.support_vectors.shape[0] == 0:
        values = np.full(X.shape[0], model.bias)
    else:
        values = model.kernel(X, model.support_vectors) @ (model.alphas * model.targets) + model.bias
    return values[0] if single else values


def dual_objective(alphas: np.ndarray, X: np.ndarray, y: np.ndarray, kernel: KernelSpec) -> float:
    """sum(alpha) - 1/2 alpha^T Q alpha, the quantity SMO maximises."""
    ay = alphas * y
    return float(alphas.sum() - 0.5 * ay @ kernel(X, X) @ ay)


# --- One-vs-rest ---
@dataclass
class OvrClassifier:
    class_ids: List[int]
    models: List[SvmModel]
    bands: List[int]  # 0-based columns of the full band set

    def decision_matrix(self, samples: np.ndarray) -> np.ndarray:
        X = np.asarray(samples, dtype=np.float64)[:, self.bands]
        return np.column_stack([decision(m, X) for m in self.models])

    def predict(self, samples: np.ndarray) -> np.ndarray:
        """Argmax of raw decision values; ties go to the lower class id."""
        scores = self.decision_matrix(samples)
        return np.asarray(self.class_ids)[np.argmax(scores, axis=1)]


def train_ovr(train: Dataset, bands: Sequence[int], kernel: KernelSpec, C: float,
              class_ids: Optional[Sequence[int]] = None, n_workers: int = 1,
              cache_rows: int = DEFAULT_CACHE_ROWS) -> OvrClassifier:
    bands = [int(b) for b in bands]
    if not bands:
        raise SvmError("at least one band is needed to train a classifier")
    class_ids = sorted(int(c) for c in (train.class_ids if class_ids is None else class_ids))
    if len(class_ids) < 2:
        raise SvmError(f"one-vs-rest needs at least two classes, got {class_ids}")
    present = set(train.class_ids.tolist())
    for class_id in class_ids:
        if class_id not in present:
            raise SvmError(f"class {class_id} ({train.class_name(class_id)}) has no training samples")

    X = train.samples[:, bands]

    def fit(class_id: int) -> SvmModel:
        y = np.where(train.labels == class_id, 1.0, -1.0)
        return train_binary(X, y, kernel, C, cache_rows=cache_rows)

    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            models = list(pool.map(fit, class_ids))
    else:
        models = [fit(c) for c in class_ids]
    return OvrClassifier(class_ids=class_ids, models=models, bands=bands)


def select_gamma(train: Dataset, bands: Sequence[int], C: float, grid: Sequence[float] = DEFAULT_GAMMA_GRID,
                 folds: int = 3, seed: int = 0, cache_rows: int = DEFAULT_CACHE_ROWS) -> float:
    """Stratified k-fold choice of the RBF width; grid values are divided by the band count.

    Folds come from the same SplitMix64 stream as the train/test splits, so a (seed, ratio) point
    picks the same gamma on every platform and every rerun; resumed sweeps depend on that.
    """
    bands = list(bands)
    candidates = [g / len(bands) for g in grid]
    rng = SplitMix64(seed)
    fold_of = np.empty(train.n_samples, dtype=np.int64)
    for class_id in train.class_ids:
        members = rng.shuffle(np.flatnonzero(train.labels == class_id).tolist())
        for position, index in enumerate(members):
            fold_of[index] = position % folds

    best_gamma, best_score = candidates[0], -np.inf
    for gamma in candidates:
        scores = []
        for fold in range(folds):
            fit_rows = np.flatnonzero(fold_of != fold)
            held_rows = np.flatnonzero(fold_of == fold)
            fit_part = train.subset(fit_rows)
            if held_rows.size == 0 or fit_part.class_count < 2:
                continue
            clf = train_ovr(fit_part, bands, KernelSpec(KernelKind.RBF, gamma), C, cache_rows=cache_rows)
            held = train.subset(held_rows)
            report = evaluate_predictions(held.labels, clf.predict(held.samples), clf.class_ids)
            scores.append(report.weighted)
        score = float(np.mean(scores)) if scores else -np.inf
        logger.debug(f"gamma {gamma:.4g}: cross-validated weighted MCC {score:.4f}")
        if score > best_score:
            best_gamma, best_score = gamma, score
    logger.info(f"Selected gamma {best_gamma:.4g} (weighted MCC {best_score:.4f}) over {len(bands)} bands")
    return best_gamma


# --- Model dump ---
def save_classifier(clf: OvrClassifier, path: str):
    body = {
        "class_ids": clf.class_ids,
        "bands": clf.bands,
        "models": [
            {
                "support_vectors": m.support_vectors.tolist(),
                "alphas": m.alphas.tolist(),
                "targets": m.targets.tolist(),
                "bias": m.bias,
                "kernel": {"kind": m.kernel.kind.value, "gamma": m.kernel.gamma},
                "C": m.C,
                "converged": m.converged,
                "iterations": m.iterations,
            }
            for m in clf.models
        ],
    }
    with open(path, 'w', encoding='utf-8') as f:
        f.write(f"{MODEL_FORMAT_HEADER} {MODEL_FORMAT_VERSION}\n")
        json.dump(body, f)
    logger.info(f"Saved one-vs-rest classifier ({len(clf.models)} models) to {path}")


def load_classifier(path: str) -> OvrClassifier:
    with open(path, 'r', encoding='utf-8') as f:
        header = f.readline().split()
        if len(header) != 2 or header[0] != MODEL_FORMAT_HEADER:
            raise SvmError(f"{path} is not a bandsel model dump")
        if int(header[1]) != MODEL_FORMAT_VERSION:
            raise SvmError(f"{path} has model format version {header[1]}, expected {MODEL_FORMAT_VERSION}")
        body = json.load(f)
    models = [
        SvmModel(support_vectors=np.asarray(m["support_vectors"], dtype=np.float64).reshape(len(m["alphas"]), -1),
                 alphas=np.asarray(m["alphas"]), targets=np.asarray(m["targets"]), bias=m["bias"],
                 kernel=KernelSpec(m["kernel"]["kind"], m["kernel"]["gamma"]), C=m["C"],
                 converged=m["converged"], iterations=m["iterations"])
        for m in body["models"]
    ]
    return OvrClassifier(class_ids=body["class_ids"], models=models, bands=body["bands"])
