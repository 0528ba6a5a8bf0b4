import logging
import os
import stat

import numpy as np
import pytest

from core.dataset import Dataset, stratified_split
from core.errors import ConfigError, LeakageError
from core.metrics import Weighting
from harness.config import ExperimentConfig
from harness.runner import LeakageGuard, evaluate_point, load_report, run, weight_sizes
from harness.tables import CLASS_MCC_FILE, LONG_FILE, SELECTED_BANDS_FILE, emit_tables
from rankers import Ranker, RankerRegistry, build_registry


def toy_config(output_dir, **changes):
    settings = dict(dataset="toy", methods=["pca", "relief"], band_counts=[1, 2], ratios=[0.5], seeds=[1],
                    gamma=1.0, output_dir=str(output_dir), threads=2)
    settings.update(changes)
    return ExperimentConfig(**settings)


class Exploding(Ranker):
    name = "exploding"

    def rank(self, train, k, settings):
        raise RuntimeError("no ranking today")


def test_run_records_every_grid_point(tmp_path, toy_dataset):
    report = run(toy_config(tmp_path), dataset=toy_dataset)
    assert len(report.records) == 4
    assert not report.failed_records()
    one = report.get("pca", 1, 0.5, 1)
    two = report.get("pca", 2, 0.5, 1)
    assert two.bands[:1] == one.bands
    assert len(set(two.bands)) == 2
    assert all(1 <= b <= 4 for b in two.bands)
    assert -1.0 <= one.weighted_mcc <= 1.0
    assert one.class_ids == [1, 2, 3]
    assert one.gamma == 1.0


def test_runs_are_deterministic(tmp_path, toy_dataset):
    first = run(toy_config(tmp_path / "a"), dataset=toy_dataset)
    second = run(toy_config(tmp_path / "b", threads=1), dataset=toy_dataset)
    for a, b in zip(first.records, second.records):
        assert a.key == b.key
        assert a.bands == b.bands
        assert a.weighted_mcc == b.weighted_mcc


def test_rerun_resumes(tmp_path, toy_dataset, caplog):
    config = toy_config(tmp_path)
    first = run(config, dataset=toy_dataset)
    caplog.clear()
    caplog.set_level(logging.INFO, logger="bandsel")
    second = run(config, dataset=toy_dataset)
    assert "4 points already done" in caplog.text
    assert [r.weighted_mcc for r in second.records] == [r.weighted_mcc for r in first.records]


def test_failures_become_records(tmp_path, toy_dataset):
    registry = build_registry(["rankers.pca_ranker"])
    registry.add_ranker(Exploding())
    report = run(toy_config(tmp_path, methods=["exploding", "pca"]), registry=registry, dataset=toy_dataset)
    failed = report.failed_records()
    assert len(failed) == 2
    assert all("no ranking today" in r.message for r in failed)
    assert len(report.ok_records()) == 2


def test_unknown_method_fails_before_running(tmp_path, toy_dataset):
    with pytest.raises(ConfigError, match="mcm"):
        run(toy_config(tmp_path, methods=["mcm"]), registry=RankerRegistry(), dataset=toy_dataset)


@pytest.mark.skipif(os.name == "nt" or os.geteuid() == 0, reason="permission bits are not enforced")
def test_unwritable_output_dir(tmp_path, toy_dataset):
    locked = tmp_path / "locked"
    locked.mkdir()
    locked.chmod(stat.S_IRUSR | stat.S_IXUSR)
    try:
        with pytest.raises(ConfigError, match="not writable"):
            run(toy_config(locked), dataset=toy_dataset)
    finally:
        locked.chmod(stat.S_IRWXU)


def test_leakage_guard_counts_and_raises(toy_dataset):
    split = stratified_split(toy_dataset, 0.5, 0)
    train, test = toy_dataset.subset(split.train_indices), toy_dataset.subset(split.test_indices)
    guard = LeakageGuard()
    guard.check(train, test, "ranker")
    assert guard.checks == 1
    with pytest.raises(LeakageError):
        guard.check(toy_dataset, test, "ranker")


def test_every_boundary_is_guarded(tmp_path, toy_dataset):
    guard = LeakageGuard()
    run(toy_config(tmp_path), dataset=toy_dataset, guard=guard)
    # one ranker check per method plus one trainer check per record
    assert guard.checks == 2 + 4


def test_weight_sizes(toy_dataset):
    split = stratified_split(toy_dataset, 0.75, 0)
    train, test = toy_dataset.subset(split.train_indices), toy_dataset.subset(split.test_indices)
    assert weight_sizes(Weighting.TEST, [1, 2, 3], train, test) == [9, 9, 9]
    assert weight_sizes(Weighting.TRAIN, [1, 2, 3], train, test) == [3, 3, 3]
    assert weight_sizes(Weighting.TOTAL, [1, 2, 3], train, test) == [12, 12, 12]


def test_evaluate_point_with_gamma_grid(toy_dataset):
    split = stratified_split(toy_dataset, 0.5, 2)
    train, test = toy_dataset.subset(split.train_indices), toy_dataset.subset(split.test_indices)
    config = ExperimentConfig(dataset="toy", gamma=None, gamma_grid=[1.0, 10.0])
    report, gamma = evaluate_point(train, test, [0], config, seed=2)
    assert gamma in (1.0, 10.0)
    assert report.sizes == [6, 6, 6]


def test_load_report_filters_to_grid(tmp_path, toy_dataset):
    run(toy_config(tmp_path), dataset=toy_dataset)
    report = load_report(str(tmp_path), toy_config(tmp_path, methods=["relief"], band_counts=[2]))
    assert [r.key for r in report.records] == [("relief", 2, 0.5, 1)]
    with pytest.raises(ConfigError):
        load_report(str(tmp_path / "empty"))


def test_label_shuffle_drops_score(tmp_path, toy_dataset):
    rng = np.random.default_rng(0)
    shuffled = Dataset(samples=toy_dataset.samples, labels=rng.permutation(toy_dataset.labels))
    real = run(toy_config(tmp_path / "real", methods=["relief"]), dataset=toy_dataset)
    noise = run(toy_config(tmp_path / "noise", methods=["relief"], seeds=[1, 2, 3]), dataset=shuffled)
    assert real.get("relief", 2, 0.5, 1).weighted_mcc > np.mean([r.weighted_mcc for r in noise.records])


def test_three_band_single_point_grid(tmp_path, toy_dataset):
    three = toy_dataset.select_bands([0, 1, 2])
    report = run(toy_config(tmp_path, methods=["pca"], ratios=[0.9]), dataset=three)
    assert [r.band_count for r in report.records] == [1, 2]
    assert set(report.records[0].bands) <= set(report.records[1].bands)


def test_rerun_tables_are_byte_identical(tmp_path, toy_dataset):
    outputs = []
    for name in ("a", "b"):
        report = run(toy_config(tmp_path / name), dataset=toy_dataset)
        emit_tables(report, str(tmp_path / name), focus_band_count=2)
        outputs.append([(tmp_path / name / f).read_bytes() for f in (SELECTED_BANDS_FILE, CLASS_MCC_FILE, LONG_FILE)])
    assert outputs[0] == outputs[1]


def test_grid_selected_c_is_stored(tmp_path, toy_dataset):
    config = toy_config(tmp_path, methods=["mcm", "pca"], band_counts=[2], mcm_c=None, mcm_c_grid=[1.0, 10.0])
    report = run(config, dataset=toy_dataset)
    chosen = report.get("mcm", 2, 0.5, 1).mcm_c
    assert chosen in (1.0, 10.0)
    assert report.get("pca", 2, 0.5, 1).mcm_c is None
    assert load_report(str(tmp_path), config).get("mcm", 2, 0.5, 1).mcm_c == chosen
