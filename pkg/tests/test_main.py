import pandas as pd
import pytest
from click.testing import CliRunner

from main import cli


@pytest.fixture
def runner():
    return CliRunner()


def test_presets_lists_indian_pines(runner):
    result = runner.invoke(cli, ["presets"])
    assert result.exit_code == 0
    assert "indian_pines" in result.output


def test_ingest_copies_csv(runner, toy_csv, tmp_path):
    out = tmp_path / "copy.csv"
    result = runner.invoke(cli, ["ingest", "--dataset", toy_csv, "--format", "csv", "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "36 samples, 4 bands, 3 classes" in result.output


def test_rank_writes_csv(runner, toy_csv, tmp_path):
    out = tmp_path / "ranking.csv"
    result = runner.invoke(cli, ["rank", "--dataset", toy_csv, "--method", "pca", "--ratio", "0.5", "--out", str(out)])
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out)
    assert list(frame.columns) == ["rank", "band_index", "score"]
    assert frame["rank"].tolist() == [1, 2, 3, 4]
    assert sorted(frame["band_index"]) == [1, 2, 3, 4]


def test_rank_dumps_mcm_lps(runner, toy_csv, tmp_path):
    lp_dir = tmp_path / "lps"
    result = runner.invoke(cli, ["rank", "--dataset", toy_csv, "--method", "mcm", "--ratio", "0.5",
                                 "--dump-lp", str(lp_dir)])
    assert result.exit_code == 0, result.output
    assert len(list(lp_dir.iterdir())) == 3
    assert result.output.splitlines()[0] == "rank,band_index,score"


def test_unknown_method_is_a_clean_error(runner, toy_csv):
    result = runner.invoke(cli, ["rank", "--dataset", toy_csv, "--method", "lasso"])
    assert result.exit_code == 1
    assert "unknown method" in result.output


def test_eval_writes_report(runner, toy_csv, tmp_path):
    out = tmp_path / "report.csv"
    model = tmp_path / "model.txt"
    result = runner.invoke(cli, ["eval", "--dataset", toy_csv, "--method", "relief", "--k", "2", "--ratio", "0.5",
                                 "--gamma", "1.0", "--out", str(out), "--save-model", str(model)])
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out)
    assert frame["name"].tolist() == ["class_1", "class_2", "class_3", "Weighted Average"]
    assert model.read_text().startswith("bandsel-ovr-model 1")


def test_sweep_then_report(runner, toy_csv, tmp_path):
    out = tmp_path / "results"
    result = runner.invoke(cli, ["sweep", "--dataset", toy_csv, "--methods", "pca,relief", "--band-counts", "1,2",
                                 "--ratios", "0.5", "--seeds", "0,1", "--gamma", "1", "--threads", "2",
                                 "--output-dir", str(out), "--focus-band-count", "2"])
    assert result.exit_code == 0, result.output
    assert "8 records, 0 failed" in result.output
    assert (out / "weighted_mcc_summary.csv").exists()

    (out / "class_mcc.csv").unlink()
    result = runner.invoke(cli, ["report", "--output-dir", str(out), "--focus-band-count", "2"])
    assert result.exit_code == 0, result.output
    assert (out / "class_mcc.csv").exists()


def test_sweep_rejects_bad_config(runner, tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("colour = blue\n")
    result = runner.invoke(cli, ["sweep", "--config", str(ini)])
    assert result.exit_code == 1
    assert "colour" in result.output
