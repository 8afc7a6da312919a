import numpy as np
import pandas as pd
import pytest

from risksvm.data import DataError, from_frame, ingest


def test_wdbc_shape(wdbc_path):
    data = ingest(wdbc_path, "diagnosis", "M")
    assert data.n_features == 30
    # the distributed file has 212 malignant rows (one more than often quoted)
    assert data.class_sizes == (357, 212)


def test_categorical_one_hot():
    frame = pd.DataFrame({
        "shift": ["W", "N", "W", "N", "W"], "seismic": ["a", "b", "c", "a", "b"],
        "energy": [1.0, 2, 3, 4, 5], "class": [0, 1, 0, 1, 0],
    })
    data = from_frame(frame, "class", "1")
    # drop-first encoding: shift -> 1 column, seismic -> 2 columns
    assert data.n_features == 1 + 1 + 2
    assert "shift_W" in data.feature_names and "seismic_a" not in data.feature_names
    assert list(data.labels) == [0, 1, 0, 1, 0]


def test_label_matching_is_textual():
    frame = pd.DataFrame({"x": [1.0, 2.0, 3.0, 4.0], "y": [" yes", "no", "yes ", "no"]})
    assert list(from_frame(frame, "y", "yes").labels) == [1, 0, 1, 0]


def test_drop_columns():
    frame = pd.DataFrame({"id": [1, 2, 3, 4], "x": [1.0, 2, 3, 4], "y": [0, 1, 0, 1]})
    assert from_frame(frame, "y", 1, drop_columns=["id"]).n_features == 1
    with pytest.raises(DataError):
        from_frame(frame, "y", 1, drop_columns=["nope"])


@pytest.mark.parametrize("frame, label", [
    (pd.DataFrame({"x": [1.0, 2.0], "y": [0, 1]}), "z"),
    (pd.DataFrame({"x": [1.0, np.nan, 3.0], "y": [0, 1, 1]}), "y"),
    (pd.DataFrame({"x": [1.0, 2.0, 3.0], "y": [0, 0, 0]}), "y"),
])
def test_rejects(frame, label):
    with pytest.raises(DataError):
        from_frame(frame, label, 1)


def test_unreadable(tmp_path):
    with pytest.raises(DataError):
        ingest(tmp_path / "missing.csv", "y", 1)


def test_two_rows_warn(tmp_path):
    path = tmp_path / "two.csv"
    path.write_text("a,b,label\n1,2,pos\n3,4,neg\n")
    with pytest.warns(UserWarning):
        data = ingest(path, "label", "pos")
    assert data.class_sizes == (1, 1)
