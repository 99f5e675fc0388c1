import numpy as np
import pytest

from pidimpute.data import IncompleteDataset, load_dataset_csv, save_dataset_csv
from pidimpute.errors import SchemaMismatchError


def _toy():
    values = np.array([[1.0, np.nan, 3.0], [np.nan, 2.0, -0.5], [0.1, 0.2, 0.3]])
    return IncompleteDataset.from_values(
        values, species=np.array([1, 2, 3]), momentum=np.array([0.27, 0.28, 0.29])
    )


def test_from_values_mask():
    ds = _toy()
    assert ds.mask.tolist() == [
        [True, False, True],
        [False, True, True],
        [True, True, True],
    ]
    assert ds.complete_row_indices().tolist() == [2]


def test_shape_mismatch_rejected():
    with pytest.raises(SchemaMismatchError):
        IncompleteDataset(np.zeros((2, 3)), np.ones((3, 2), dtype=bool))
    with pytest.raises(SchemaMismatchError):
        IncompleteDataset(np.zeros((2, 3)), np.ones((2, 3), dtype=bool), species=[1])


def test_column_means_observed_only():
    ds = _toy()
    np.testing.assert_allclose(ds.column_means(), [0.55, 1.1, 2.8 / 3])


def test_subset_copies():
    ds = _toy()
    sub = ds.subset([0, 2])
    sub.values[0, 0] = 99.0
    assert ds.values[0, 0] == 1.0
    assert sub.species.tolist() == [1, 3]


def test_csv_round_trip_exact(tmp_path):
    ds = _toy()
    path = tmp_path / "d.csv"
    save_dataset_csv(path, ds, comments=["config_hash=deadbeef master_seed=1"])
    back = load_dataset_csv(path)
    assert back.mask.tolist() == ds.mask.tolist()
    # observed values survive exactly (repr round-trip)
    np.testing.assert_array_equal(
        back.values[ds.mask], ds.values[ds.mask]
    )
    assert back.species.tolist() == [1, 2, 3]
    np.testing.assert_allclose(back.momentum, ds.momentum, rtol=1e-5)


def test_csv_deterministic_bytes(tmp_path):
    ds = _toy()
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    save_dataset_csv(a, ds)
    save_dataset_csv(b, ds)
    assert a.read_bytes() == b.read_bytes()


def test_load_rejects_malformed(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("nope,nope\n1,2\n")
    with pytest.raises(SchemaMismatchError):
        load_dataset_csv(path)
