import numpy as np
import pytest

from core.dataset import (Dataset, SplitMix64, apply_preset, drop_bands, load_csv, load_presets, load_raw_cube,
                          normalize, removed_band_ids, save_csv, stratified_split)
from core.errors import DatasetFormatError, SizeMismatchError


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# --- CSV ---
def test_load_csv_three_rows(tmp_path):
    d = load_csv(write(tmp_path, "a.csv", "1.0,2.0,1\n3.0,4.0,2\n5.0,6.0,1"))
    assert (d.n_samples, d.band_count, d.class_count) == (3, 2, 2)
    assert d.labels.tolist() == [1, 2, 1]
    assert d.band_ids.tolist() == [1, 2]


def test_load_csv_discards_unlabeled_rows(tmp_path):
    d = load_csv(write(tmp_path, "a.csv", "1.0,2.0,1\n3.0,4.0,0\n5.0,6.0,2\n"))
    assert d.n_samples == 2
    assert d.discarded == 1


def test_load_csv_header_restores_band_ids(tmp_path):
    d = load_csv(write(tmp_path, "a.csv", "band_3,band_7,label\n0.5,0.25,4\n"))
    assert d.band_ids.tolist() == [3, 7]
    assert d.class_ids.tolist() == [4]


@pytest.mark.parametrize("text, line", [
    ("1.0,2.0,1\n3.0,1\n", 2),
    ("1.0,2.0,1\n3.0,x,1\n", 2),
    ("1.0,2.0,1\n3.0,4.0,1\nnan,4.0,2\n", 3),
    ("1.0,2.0,1.5\n", 1),
    ("1.0,x,1\n3.0,4.0,1\n", 1),
    ("band_1,2.0,label\n3.0,4.0,1\n", 1),
])
def test_load_csv_malformed_row_names_line(tmp_path, text, line):
    with pytest.raises(DatasetFormatError) as info:
        load_csv(write(tmp_path, "bad.csv", text))
    assert info.value.line_number == line
    assert f"line {line}" in str(info.value)


def test_load_csv_empty_file(tmp_path):
    with pytest.raises(DatasetFormatError):
        load_csv(write(tmp_path, "empty.csv", ""))


def test_load_csv_only_background(tmp_path):
    with pytest.raises(DatasetFormatError):
        load_csv(write(tmp_path, "bg.csv", "1.0,0\n2.0,0\n"))


def test_save_csv_then_load_keeps_values(tmp_path, toy_dataset):
    path = str(tmp_path / "toy.csv")
    save_csv(toy_dataset, path)
    back = load_csv(path)
    np.testing.assert_array_equal(back.samples, toy_dataset.samples)
    np.testing.assert_array_equal(back.labels, toy_dataset.labels)


def test_save_csv_then_load_keeps_band_ids_and_classes(tmp_path):
    rng = np.random.default_rng(8)
    d = drop_bands(Dataset(samples=rng.random((6, 5)), labels=[3, 7, 3, 9, 7, 9]), [2])
    path = str(tmp_path / "dropped.csv")
    save_csv(d, path)
    back = load_csv(path)
    assert back.band_ids.tolist() == [1, 3, 4, 5]
    assert back.labels.tolist() == [3, 7, 3, 9, 7, 9]
    assert list(back.class_ids) == [3, 7, 9]
    np.testing.assert_array_equal(back.samples, d.samples)


# --- Raw cube ---
def write_cube(tmp_path, cube, labels, bands_in_header=None):
    rows, cols, bands = cube.shape
    cube.astype('<f4').tofile(tmp_path / "scene.dat")
    np.asarray(labels, dtype='<u2').tofile(tmp_path / "scene_gt.dat")
    header = tmp_path / "scene.hdr"
    header.write_text(f"rows = {rows}\ncols = {cols}\nbands = {bands_in_header or bands}\nlabels = scene_gt.dat\n")
    return str(tmp_path / "scene.dat"), str(header)


def test_load_raw_cube_keeps_labeled_pixels(tmp_path):
    cube = np.arange(12, dtype=np.float32).reshape(2, 2, 3)
    data, header = write_cube(tmp_path, cube, [1, 0, 2, 1])
    d = load_raw_cube(data, header)
    assert (d.n_samples, d.band_count) == (3, 3)
    assert d.labels.tolist() == [1, 2, 1]
    assert d.samples[1].tolist() == [6.0, 7.0, 8.0]
    assert d.discarded == 1


def test_load_raw_cube_size_mismatch(tmp_path):
    cube = np.zeros((2, 2, 199), dtype=np.float32)
    data, header = write_cube(tmp_path, cube, [1, 1, 1, 1], bands_in_header=200)
    with pytest.raises(SizeMismatchError) as info:
        load_raw_cube(data, header)
    assert info.value.expected_bytes == 2 * 2 * 200 * 4
    assert info.value.actual_bytes == 2 * 2 * 199 * 4
    assert "3200" in str(info.value) and "3184" in str(info.value)


# --- Preprocessing ---
def test_normalize_min_max_and_constant_band():
    d = normalize(Dataset(samples=[[2.0, 5.0], [4.0, 5.0], [6.0, 5.0]], labels=[1, 1, 2]))
    assert d.samples[:, 0].tolist() == [0.0, 0.5, 1.0]
    assert d.samples[:, 1].tolist() == [0.0, 0.0, 0.0]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_normalize_random_matrices(seed):
    rng = np.random.default_rng(seed)
    samples = rng.normal(loc=rng.normal(size=7) * 50, scale=rng.uniform(0.1, 20, size=7), size=(40, 7))
    samples[:, 3] = -2.5
    d = normalize(Dataset(samples=samples, labels=rng.integers(1, 4, 40)))
    varying = [0, 1, 2, 4, 5, 6]
    assert d.samples[:, varying].min(axis=0).tolist() == [0.0] * 6
    assert d.samples[:, varying].max(axis=0).tolist() == [1.0] * 6
    assert d.samples[:, 3].tolist() == [0.0] * 40
    np.testing.assert_array_equal(normalize(d).samples, d.samples)


def test_drop_bands_keeps_original_numbers():
    d = Dataset(samples=np.arange(10.0).reshape(2, 5), labels=[1, 2])
    kept = drop_bands(d, [2, 4])
    assert kept.band_ids.tolist() == [1, 3, 5]
    assert kept.samples[0].tolist() == [0.0, 2.0, 4.0]


def test_dataset_is_read_only(toy_dataset):
    with pytest.raises(ValueError):
        toy_dataset.samples[0, 0] = 1.0


# --- Split ---
def test_split_small_class_keeps_one_for_training():
    d = Dataset(samples=np.arange(10.0).reshape(10, 1), labels=[1] * 10)
    split = stratified_split(d, 0.9, seed=3)
    assert len(split.train_indices) == 1
    assert len(split.test_indices) == 9


def test_split_is_deterministic(toy_dataset):
    a = stratified_split(toy_dataset, 0.75, seed=11)
    b = stratified_split(toy_dataset, 0.75, seed=11)
    assert a.train_indices.tolist() == b.train_indices.tolist()
    assert a.test_indices.tolist() == b.test_indices.tolist()


def test_split_partitions_every_class(toy_dataset):
    split = stratified_split(toy_dataset, 0.75, seed=5)
    split.check_disjoint()
    both = np.concatenate([split.train_indices, split.test_indices])
    assert sorted(both.tolist()) == list(range(toy_dataset.n_samples))
    for class_id in toy_dataset.class_ids:
        assert np.sum(toy_dataset.labels[split.train_indices] == class_id) == 3


def test_split_singleton_class_goes_to_train(caplog):
    d = Dataset(samples=np.arange(5.0).reshape(5, 1), labels=[1, 1, 1, 1, 2])
    split = stratified_split(d, 0.5, seed=0)
    assert 4 in split.train_indices.tolist()
    assert 4 not in split.test_indices.tolist()
    assert "single sample" in caplog.text


def test_split_rejects_bad_ratio(toy_dataset):
    with pytest.raises(ValueError):
        stratified_split(toy_dataset, 1.0, seed=0)


def test_subset_tracks_source_indices(toy_dataset):
    part = toy_dataset.subset([5, 2, 30])
    assert part.source_indices.tolist() == [5, 2, 30]
    assert part.subset([2]).source_indices.tolist() == [30]


def test_splitmix_reference_values():
    rng = SplitMix64(0)
    assert rng.next_u64() == 0xE220A8397B1DCDAF
    assert rng.next_u64() == 0x6E789E6AA1B965F4


def test_splitmix_below_stays_in_range():
    rng = SplitMix64(42)
    assert all(0 <= rng.below(7) < 7 for _ in range(200))
    assert sorted(SplitMix64(1).permutation(20).tolist()) == list(range(20))


# --- Presets ---
def test_presets_cover_three_scenes():
    presets = load_presets()
    assert {"indian_pines", "salinas", "botswana"} <= set(presets)
    pines = presets["indian_pines"]
    assert len(pines["class_names"]) == 16
    assert pines["class_counts"][0] == 46 and pines["class_counts"][10] == 2455
    assert pines["raw_band_count"] - len(removed_band_ids(pines)) == 200
    salinas = presets["salinas"]
    assert salinas["raw_band_count"] - len(removed_band_ids(salinas)) == 204


def test_apply_preset_drops_water_bands():
    d = Dataset(samples=np.zeros((2, 220)), labels=[1, 2])
    pines = apply_preset(d, "indian_pines")
    assert pines.band_count == 200
    assert 104 not in pines.band_ids.tolist() and 220 not in pines.band_ids.tolist()
    assert pines.class_name(1) == "Alfalfa"


def test_apply_preset_unknown_name(toy_dataset):
    with pytest.raises(DatasetFormatError):
        apply_preset(toy_dataset, "nowhere")
