import numpy as np
import pytest

from vizrefine.data import load_csv, save_csv


def test_roundtrip_with_labels(tmp_path):
    path = tmp_path / "d.csv"
    X = np.array([[1.5, -2.25], [0.1, 3.0], [7.0, 0.125]])
    labels = ["a", "b", "a"]
    save_csv(path, X, labels)
    X2, labels2, names = load_csv(path, label_col="label")
    assert np.array_equal(X, X2)
    assert labels2 == labels
    assert names == ["f0", "f1"]


def test_roundtrip_without_labels(tmp_path):
    path = tmp_path / "d.csv"
    X = np.array([[1.0, 2.0], [3.0, 4.0]])
    save_csv(path, X, feature_names=["alpha", "beta"])
    X2, labels, names = load_csv(path)
    assert np.array_equal(X, X2)
    assert labels is None
    assert names == ["alpha", "beta"]


def test_missing_label_column(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x,y\n1,2\n")
    with pytest.raises(ValueError, match="label column"):
        load_csv(path, label_col="label")


def test_non_numeric_cell_names_row_and_column(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x,y\n1,2\n1,oops\n")
    with pytest.raises(ValueError, match=r"row 2.*'y'.*'oops'"):
        load_csv(path)


def test_ragged_row_rejected(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x,y\n1,2,3\n")
    with pytest.raises(ValueError, match="row 1"):
        load_csv(path)


def test_empty_and_headerless_files(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ValueError, match="empty"):
        load_csv(empty)
    header_only = tmp_path / "h.csv"
    header_only.write_text("x,y\n")
    with pytest.raises(ValueError, match="no data rows"):
        load_csv(header_only)


def test_non_finite_value_rejected(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x\n1\ninf\n")
    with pytest.raises(ValueError, match="row 2.*non-finite"):
        load_csv(path)


def test_label_column_position_ignored(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("lab,x,y\nu,1,2\nv,3,4\n")
    X, labels, names = load_csv(path, label_col="lab")
    assert np.array_equal(X, [[1.0, 2.0], [3.0, 4.0]])
    assert labels == ["u", "v"]
    assert names == ["x", "y"]
