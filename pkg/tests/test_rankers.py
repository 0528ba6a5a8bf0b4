import pytest

from core.errors import ConfigError
from rankers import FeatureRanking, Ranker, RankerRegistry, build_registry, rank_by_scores


def test_builtin_extensions_register_every_method():
    registry = build_registry()
    assert sorted(registry.names()) == ["cmim", "jmi", "mcm", "mrmr", "pca", "relief"]
    assert registry.get("jmi").greedy
    assert not registry.get("pca").greedy


def test_failed_extension_is_logged_and_skipped(caplog):
    registry = build_registry(["rankers.pca_ranker", "rankers.no_such_ranker"])
    assert registry.names() == ["pca"]
    assert "Failed to load extension rankers.no_such_ranker." in caplog.text


def test_extension_without_setup_is_rejected():
    with pytest.raises(ConfigError, match="setup"):
        RankerRegistry().load_extension("core.errors")


def test_unknown_method_lists_known_ones():
    with pytest.raises(ConfigError, match="pca"):
        build_registry(["rankers.pca_ranker"]).get("lasso")


def test_duplicate_name_rejected():
    class Twin(Ranker):
        name = "twin"

    registry = RankerRegistry()
    registry.add_ranker(Twin())
    assert "twin" in registry
    with pytest.raises(ConfigError):
        registry.add_ranker(Twin())


def test_ranking_validation():
    with pytest.raises(ValueError):
        FeatureRanking(order=[0, 0], scores=[1.0, 1.0], method="x")
    with pytest.raises(ValueError):
        FeatureRanking(order=[0, 1], scores=[1.0], method="x")
    with pytest.raises(ValueError):
        FeatureRanking(order=[0, 1], scores=[1.0, 2.0], method="x")
    assert FeatureRanking(order=[0, 1], scores=[1.0, 2.0], method="x", greedy=True).top(1) == [0]


def test_ranking_by_scores_breaks_ties_low():
    ranking = rank_by_scores([0.3, 0.7, 0.3, 0.7], "x")
    assert ranking.order == [1, 3, 0, 2]
    assert ranking.band_numbers(2) == [2, 4]
    with pytest.raises(ValueError):
        ranking.top(5)
