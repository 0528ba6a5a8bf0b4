"""Experiment grid: split per (seed, ratio), rank once per method, evaluate a one-vs-rest SVM per band count."""
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.dataset import Dataset, Split, apply_preset, load_csv, load_raw_cube, normalize, stratified_split
from core.errors import ConfigError, LeakageError
from core.metrics import McReport, Weighting, evaluate_predictions
from core.svm import DEFAULT_CACHE_ROWS, KernelKind, KernelSpec, select_gamma, train_ovr
from db_utils.results_database import RESULTS_DB_NAME, RecordKey, ResultsDatabase
from harness.config import ExperimentConfig
from rankers import RankerRegistry, build_registry

logger = logging.getLogger('bandsel.runner')

STATUS_OK = "ok"
STATUS_FAILED = "failed"


@dataclass
class ExperimentRecord:
    method: str
    band_count: int
    ratio: float
    seed: int
    status: str = STATUS_OK
    bands: List[int] = field(default_factory=list)  # 1-based
    class_ids: List[int] = field(default_factory=list)
    per_class_mcc: List[float] = field(default_factory=list)
    class_sizes: List[int] = field(default_factory=list)
    weighted_mcc: Optional[float] = None
    wall_time: float = 0.0
    message: Optional[str] = None
    gamma: Optional[float] = None
    mcm_c: Optional[float] = None

    @property
    def key(self) -> RecordKey:
        return (self.method, self.band_count, self.ratio, self.seed)

    @property
    def failed(self) -> bool:
        return self.status == STATUS_FAILED

    def as_row(self) -> Dict:
        return asdict(self)


@dataclass
class ExperimentReport:
    records: List[ExperimentRecord]
    methods: List[str]
    class_names: Dict[int, str] = field(default_factory=dict)

    def failed_records(self) -> List[ExperimentRecord]:
        return [r for r in self.records if r.failed]

    def ok_records(self) -> List[ExperimentRecord]:
        return [r for r in self.records if not r.failed]

    @property
    def seeds(self) -> List[int]:
        return sorted({r.seed for r in self.records})

    def get(self, method: str, band_count: int, ratio: float, seed: int) -> Optional[ExperimentRecord]:
        for r in self.records:
            if r.key == (method, band_count, ratio, seed):
                return r
        return None


class LeakageGuard:
    """Provenance check at each ranker and trainer call site.

    It compares the source indices of the data handed over with those of the held-out test subset
    and counts the checks made. It does not track reads inside a ranker or trainer, so it only
    covers what the caller passes in.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.checks = 0

    def check(self, data: Dataset, held_out: Dataset, where: str):
        overlap = np.intersect1d(data.source_indices, held_out.source_indices)
        with self._lock:
            self.checks += 1
        if overlap.size:
            raise LeakageError(f"{overlap.size} test samples reached {where}")


def check_output_dir(output_dir: str):
    try:
        os.makedirs(output_dir, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output directory {output_dir}: {e}") from e
    if not os.access(output_dir, os.W_OK):
        raise ConfigError(f"output directory {output_dir} is not writable")


def load_experiment_dataset(config: ExperimentConfig) -> Dataset:
    path = config.dataset_path()
    d = load_raw_cube(path, config.header) if config.format == "cube" else load_csv(path)
    if config.preset:
        d = apply_preset(d, config.preset)
    if config.normalize:
        d = normalize(d)
    logger.info(f"Dataset {path}: {d.n_samples} samples, {d.band_count} bands, {d.class_count} classes")
    return d


def weight_sizes(weighting: Weighting, class_ids: Sequence[int], train: Dataset, test: Dataset) -> List[int]:
    train_counts, test_counts = train.class_counts(), test.class_counts()
    if weighting is Weighting.TRAIN:
        return [train_counts.get(c, 0) for c in class_ids]
    if weighting is Weighting.TOTAL:
        return [train_counts.get(c, 0) + test_counts.get(c, 0) for c in class_ids]
    return [test_counts.get(c, 0) for c in class_ids]


def evaluate_point(train: Dataset, test: Dataset, bands: Sequence[int], config: ExperimentConfig,
                   seed: int = 0, cache_rows: int = DEFAULT_CACHE_ROWS) -> Tuple[McReport, float]:
    """Train the one-vs-rest SVM on the given 0-based columns and score it on the test set."""
    gamma = config.gamma
    if gamma is None:
        gamma = select_gamma(train, bands, config.svm_c, config.gamma_grid, config.cv_folds, seed, cache_rows)
    clf = train_ovr(train, bands, KernelSpec(KernelKind.RBF, gamma), config.svm_c, cache_rows=cache_rows)
    predicted = clf.predict(test.samples)
    report = evaluate_predictions(test.labels, predicted, clf.class_ids,
                                  weight_sizes(config.weighting, clf.class_ids, train, test), train.class_names)
    return report, gamma


def _method_job(method: str, ranker, config: ExperimentConfig, train: Dataset, test: Dataset, split: Split,
                band_counts: List[int], guard: LeakageGuard) -> List[ExperimentRecord]:
    """Rank once on the training part, then evaluate every pending band count on the ranking's prefixes."""
    records = []
    base = dict(method=method, ratio=split.ratio, seed=split.seed)
    try:
        guard.check(train, test, f"ranker {method} (ratio {split.ratio}, seed {split.seed})")
        ranking = ranker.rank(train, max(config.band_counts), config.ranker_settings(split.seed))
        mcm_c = ranking.parameters.get("mcm_c")
    except Exception as e:
        logger.error(f"Ranking failed for {method} (ratio {split.ratio}, seed {split.seed})", exc_info=True)
        return [ExperimentRecord(band_count=k, status=STATUS_FAILED, message=f"ranking: {e}", **base) for k in band_counts]

    for k in band_counts:
        started = time.perf_counter()
        try:
            bands = ranking.top(k)
            guard.check(train, test, f"SVM trainer ({method}, k={k}, ratio {split.ratio}, seed {split.seed})")
            report, gamma = evaluate_point(train, test, bands, config, split.seed)
            records.append(ExperimentRecord(
                band_count=k, bands=ranking.band_numbers(k), class_ids=report.class_ids,
                per_class_mcc=report.per_class, class_sizes=report.sizes, weighted_mcc=report.weighted,
                wall_time=time.perf_counter() - started, gamma=gamma, mcm_c=mcm_c, **base))
            logger.info(f"{method} k={k} ratio={split.ratio} seed={split.seed}: weighted MCC {report.weighted:.4f}")
        except Exception as e:
            logger.error(f"Evaluation failed for {method} k={k} (ratio {split.ratio}, seed {split.seed})", exc_info=True)
            records.append(ExperimentRecord(band_count=k, status=STATUS_FAILED, message=str(e),
                                            wall_time=time.perf_counter() - started, **base))
    return records


def _record_from_row(row: Dict) -> ExperimentRecord:
    return ExperimentRecord(
        method=row["method"], band_count=row["band_count"], ratio=row["ratio"], seed=row["seed"],
        status=row["status"], bands=row["bands"] or [], class_ids=row["class_ids"] or [],
        per_class_mcc=row["per_class_mcc"] or [], class_sizes=row["class_sizes"] or [],
        weighted_mcc=row["weighted_mcc"], wall_time=row["wall_time"] or 0.0, message=row["message"],
        gamma=row.get("gamma"), mcm_c=row.get("mcm_c"))


def load_report(output_dir: str, config: Optional[ExperimentConfig] = None,
                class_names: Optional[Dict[int, str]] = None) -> ExperimentReport:
    """Records stored in the output directory, limited to the config's grid when one is given."""
    db_path = os.path.join(output_dir, RESULTS_DB_NAME)
    if not os.path.exists(db_path):
        raise ConfigError(f"no results database in {output_dir}")
    records = [_record_from_row(r) for r in ResultsDatabase(db_path).get_all_records()]
    if config is not None:
        grid = {(m, k, r, s) for m in config.methods for k in config.band_counts
                for r in config.ratios for s in config.seeds}
        records = [r for r in records if r.key in grid]
        methods = list(config.methods)
    else:
        methods = sorted({r.method for r in records})
    position = {m: i for i, m in enumerate(methods)}
    records.sort(key=lambda r: (position.get(r.method, len(position)), r.band_count, r.ratio, r.seed))
    return ExperimentReport(records=records, methods=methods, class_names=dict(class_names or {}))


def run(config: ExperimentConfig, registry: Optional[RankerRegistry] = None, dataset: Optional[Dataset] = None,
        guard: Optional[LeakageGuard] = None) -> ExperimentReport:
    check_output_dir(config.output_dir)
    registry = registry or build_registry()
    guard = guard or LeakageGuard()
    d = dataset if dataset is not None else load_experiment_dataset(config)
    config.validate(d.band_count, registry.names())

    db = ResultsDatabase(os.path.join(config.output_dir, RESULTS_DB_NAME))
    completed = db.completed_keys()
    workers = config.worker_count()
    logger.info(f"Grid: {len(config.methods)} methods x {len(config.band_counts)} band counts x "
                f"{len(config.ratios)} ratios x {len(config.seeds)} seeds, {len(completed)} points already done, "
                f"{workers} workers")

    with ThreadPoolExecutor(max_workers=workers) as executor:
        future_to_job = {}
        for seed in config.seeds:
            for ratio in config.ratios:
                split = stratified_split(d, ratio, seed)
                split.check_disjoint()
                train, test = d.subset(split.train_indices), d.subset(split.test_indices)
                for method in config.methods:
                    pending = [k for k in config.band_counts if (method, k, ratio, seed) not in completed]
                    if not pending:
                        continue
                    future = executor.submit(_method_job, method, registry.get(method), config,
                                             train, test, split, pending, guard)
                    future_to_job[future] = (method, ratio, seed)

        # results are written from this thread only
        for future in as_completed(future_to_job):
            method, ratio, seed = future_to_job[future]
            for record in future.result():
                db.upsert_record(record.as_row())
            logger.debug(f"Stored records for {method} ratio={ratio} seed={seed}")

    report = load_report(config.output_dir, config, d.class_names)
    failed = len(report.failed_records())
    logger.info(f"Run finished: {len(report.records)} records, {failed} failed, {guard.checks} leakage checks")
    return report
