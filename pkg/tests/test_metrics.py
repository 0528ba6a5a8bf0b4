import math

import numpy as np
import pandas as pd
import pytest

from core.errors import MetricsError
from core.metrics import (ConfusionCounts, evaluate_predictions, mcc, one_vs_rest_counts, weighted_mcc,
                          write_report_csv)


def test_perfect_classifier():
    assert mcc(ConfusionCounts(tp=5, fp=0, tn=5, fn=0)) == 1.0


def test_zero_factor_gives_zero():
    assert mcc(ConfusionCounts(tp=0, fp=0, tn=7, fn=0)) == 0.0
    assert mcc(ConfusionCounts(tp=0, fp=3, tn=7, fn=0)) == 0.0


def test_hand_arithmetic_case():
    assert mcc(ConfusionCounts(tp=4, fp=1, tn=3, fn=2)) == pytest.approx(10 / math.sqrt(600), abs=1e-12)
    assert mcc(ConfusionCounts(tp=4, fp=1, tn=3, fn=2)) == pytest.approx(0.408248, abs=1e-6)


def test_symmetric_under_class_swap():
    c = ConfusionCounts(tp=17, fp=4, tn=31, fn=9)
    swapped = ConfusionCounts(tp=c.tn, fp=c.fn, tn=c.tp, fn=c.fp)
    assert mcc(c) == mcc(swapped)


@pytest.mark.parametrize("k", [2, 10, 1000])
def test_scale_invariant(k):
    c = ConfusionCounts(tp=4, fp=1, tn=3, fn=2)
    scaled = ConfusionCounts(tp=4 * k, fp=k, tn=3 * k, fn=2 * k)
    assert mcc(scaled) == pytest.approx(mcc(c), rel=1e-12)


def test_bounded():
    rng = np.random.default_rng(0)
    for counts in rng.integers(0, 50, size=(200, 4)):
        assert -1.0 <= mcc(ConfusionCounts(*map(int, counts))) <= 1.0


def test_negative_counts_rejected():
    with pytest.raises(MetricsError):
        ConfusionCounts(tp=-1, fp=0, tn=0, fn=0)


def test_weighted_average():
    assert weighted_mcc([1.0, 1.0, 1.0], [3, 5, 9]) == pytest.approx(1.0)
    assert weighted_mcc([0.0, 1.0], [1, 3]) == pytest.approx(0.75)


def test_weighted_average_errors():
    with pytest.raises(MetricsError):
        weighted_mcc([0.5, 0.5], [0, 0])
    with pytest.raises(MetricsError):
        weighted_mcc([0.5], [1, 2])


def test_weighted_table_reproduction():
    # per-class MCM MCCs at 15 bands on Indian Pines, weighted by its test-set class sizes
    per_class = [0.820602, 0.973721, 0.934575, 0.0667986, 0.967502, 0.923784, 0.842576, 0.933875,
                 0.486037, 0.86057, 0.991267, 0.953628, 0.810033, 0.990536, 0.893755, 0.938078]
    sizes = [43, 1294, 743, 209, 441, 655, 24, 424, 19, 873, 2170, 525, 183, 1145, 355, 84]
    assert sum(sizes) == 9187
    assert weighted_mcc(per_class, sizes) == pytest.approx(0.929820, abs=5e-4)


def test_one_vs_rest_counts():
    truth = np.array([1, 1, 2, 2, 3])
    predicted = np.array([1, 2, 2, 2, 1])
    assert one_vs_rest_counts(truth, predicted, 1) == ConfusionCounts(tp=1, fp=1, tn=2, fn=1)
    assert one_vs_rest_counts(truth, predicted, 2) == ConfusionCounts(tp=2, fp=1, tn=2, fn=0)


def test_evaluate_predictions_default_weights_are_class_sizes():
    truth = np.array([1, 1, 1, 2])
    report = evaluate_predictions(truth, truth, [1, 2], class_names={1: "a", 2: "b"})
    assert report.per_class == [1.0, 1.0]
    assert report.sizes == [3, 1]
    assert report.weights == pytest.approx([0.75, 0.25])
    assert report.class_names == ["a", "b"]
    assert report.as_dict() == {1: 1.0, 2: 1.0}


def test_evaluate_predictions_custom_weights():
    truth = np.array([1, 1, 2, 2])
    predicted = np.array([1, 2, 2, 2])
    report = evaluate_predictions(truth, predicted, [1, 2], weight_sizes=[0, 5])
    assert report.weighted == pytest.approx(report.per_class[1])


def test_write_report_csv(tmp_path):
    truth = np.array([1, 1, 2, 2, 2])
    report = evaluate_predictions(truth, truth, [1, 2])
    path = tmp_path / "report.csv"
    write_report_csv(report, str(path))
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["name", "size", "mcc"]
    assert frame["name"].tolist() == ["class_1", "class_2", "Weighted Average"]
    assert frame["size"].tolist() == [2, 3, 5]
    assert frame["mcc"].iloc[-1] == pytest.approx(1.0)
