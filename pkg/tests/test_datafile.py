import json

import numpy as np
import pytest

from motzkin_tn.datafile import dataset_text, read_dataset, sidecar_path, write_dataset
from motzkin_tn.errors import DatasetError
from motzkin_tn.motzkin import build_dataset


def test_write_then_read(tmp_path):
    ds = build_dataset(6, 0.5, 0.5, seed=3)
    path = tmp_path / "train.tsv"
    meta = write_dataset(ds, path)
    assert meta["lines"] == 25 and meta["valid"] == 13 and meta["invalid"] == 12
    assert meta["motzkin_number"] == 51

    back = read_dataset(path, 6)
    assert np.array_equal(back.codes, ds.codes)
    assert np.array_equal(back.labels, ds.labels)
    assert (back.mu, back.train_fraction, back.seed) == (0.5, 0.5, 3)
    assert json.loads(sidecar_path(path).read_text(encoding="utf-8"))["sha1"] == meta["sha1"]


def test_text_format():
    ds = build_dataset(2, 1.0, 1.0, seed=0)
    assert sorted(dataset_text(ds).splitlines()) == ["ff\t1", "ud\t1"]


def test_bad_label_line(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("ud\t1\nff\t2\n", encoding="utf-8")
    with pytest.raises(DatasetError, match="line 2"):
        read_dataset(path)


def test_label_must_agree_with_chain(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("ud\t1\ndu\t1\n", encoding="utf-8")
    with pytest.raises(DatasetError, match="line 2: label 1 disagrees"):
        read_dataset(path)


def test_wrong_length(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("udf\t0\n", encoding="utf-8")
    with pytest.raises(DatasetError, match="line 1"):
        read_dataset(path, 2)


def test_empty_file(tmp_path):
    path = tmp_path / "empty.tsv"
    path.write_text("\n", encoding="utf-8")
    with pytest.raises(DatasetError):
        read_dataset(path)


def test_without_sidecar(tmp_path):
    path = tmp_path / "plain.tsv"
    path.write_text("ud\t1\ndd\t0\n", encoding="utf-8")
    ds = read_dataset(path)
    assert ds.n == 2 and ds.mu == 0.5 and len(ds) == 2
