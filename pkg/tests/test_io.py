import io
import json

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from noisyplr.experiments import SyntheticSpec, gen_synthetic
from noisyplr.io import (OUTPUT_ENV, Dataset, LibsvmFormatError, output_dir, parse_libsvm,
                         read_csv, split_indices, split_train_test, write_csv, write_json,
                         write_libsvm, write_manifest)
from noisyplr.linalg import DesignMatrix


def test_parse_example():
    ds = parse_libsvm(io.StringIO("1 3:0.5\n-1 1:2\n"))
    assert ds.X.shape == (2, 3)
    np.testing.assert_array_equal(ds.y, [1, 0])
    dense = ds.X.toarray()
    assert dense[0, 2] == 0.5 and dense[1, 0] == 2.0 and np.count_nonzero(dense) == 2
    assert ds.X.sparse


def test_parse_label_mapping_comments_and_dims():
    ds = parse_libsvm(io.StringIO("0 1:1\n# comment\n\n2 2:1 # trailing\n-3\n"), dims=5)
    np.testing.assert_array_equal(ds.y, [0, 1, 0])
    assert ds.X.shape == (3, 5)
    with pytest.raises(ValueError):
        parse_libsvm(io.StringIO("1 4:1\n"), dims=3)


def test_parse_empty_stream():
    with pytest.raises(ValueError):
        parse_libsvm(io.StringIO(""))


@pytest.mark.parametrize("text, line", [
    ("1 1:1\n1 2:1 2:3\n", 2),
    ("1 3:1 1:1\n", 1),
    ("1 0:1\n", 1),
    ("x 1:1\n", 1),
    ("1 1:abc\n", 1),
    ("1 1:1\n1 1:1\n1 2\n", 3),
    ("1 1:nan\n", 1),
])
def test_parse_errors_report_line(text, line):
    with pytest.raises(LibsvmFormatError) as exc:
        parse_libsvm(io.StringIO(text))
    assert exc.value.lineno == line and f"line {line}" in str(exc.value)


def test_roundtrip_synthetic(tmp_path):
    X, y = gen_synthetic(SyntheticSpec(300, seed=4))
    path = tmp_path / "d.svm"
    write_libsvm(path, X, y)
    back = parse_libsvm(path, dims=X.d)
    np.testing.assert_allclose(back.X.toarray(), X.toarray(), rtol=1e-12, atol=0)
    np.testing.assert_array_equal(back.y, y)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(1, 8), st.integers(0, 2 ** 31), st.floats(0.1, 0.9))
def test_roundtrip_sparse_property(n, d, seed, density):
    rng = np.random.default_rng(seed)
    M = sp.random(n, d, density=density, random_state=rng, format="csr",
                  data_rvs=lambda k: rng.standard_normal(k) * 10.0 ** rng.integers(-8, 8, k))
    y = rng.integers(0, 2, n)
    buf = io.StringIO()
    write_libsvm(buf, DesignMatrix(M), y)
    back = parse_libsvm(io.StringIO(buf.getvalue()), dims=d)
    np.testing.assert_array_equal(back.X.toarray(), M.toarray())
    np.testing.assert_array_equal(back.y, y)


def test_split_examples():
    with pytest.raises(ValueError):
        split_indices(10, 10, 0)
    with pytest.raises(ValueError):
        split_indices(10, 0, 0)
    tr, te = split_indices(49749, 40000, 0)
    assert te.size == 9749
    assert np.intersect1d(tr, te).size == 0
    np.testing.assert_array_equal(np.sort(np.concatenate([tr, te])), np.arange(49749))
    tr2, te2 = split_indices(49749, 40000, 0)
    np.testing.assert_array_equal(tr, tr2)
    assert not np.array_equal(tr, split_indices(49749, 40000, 1)[0])


def test_split_dataset():
    ds = Dataset(DesignMatrix(np.arange(20.0).reshape(10, 2)), np.arange(10) % 2)
    tr, te = split_train_test(ds, 7, seed=3)
    assert (tr.n, te.n) == (7, 3)
    rows = np.concatenate([tr.X.toarray()[:, 0], te.X.toarray()[:, 0]]) / 2
    np.testing.assert_array_equal(np.sort(rows), np.arange(10))
    np.testing.assert_array_equal(tr.y, (tr.X.toarray()[:, 0] / 2).astype(int) % 2)


def test_output_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert output_dir() == str(tmp_path / "env") and (tmp_path / "env").is_dir()
    assert output_dir(str(tmp_path / "x")) == str(tmp_path / "x")


def test_csv_and_json(tmp_path):
    write_csv(tmp_path / "a.csv", ["x", "y"], [(1, 2.5), (3, "z")])
    assert read_csv(tmp_path / "a.csv") == [{"x": "1", "y": "2.5"}, {"x": "3", "y": "z"}]
    write_json(tmp_path / "a.json", {"v": np.arange(3), "f": np.float64(1.5)})
    assert json.loads((tmp_path / "a.json").read_text()) == {"v": [0, 1, 2], "f": 1.5}


def test_manifest_contents(tmp_path):
    m = write_manifest(str(tmp_path), "fit", {"mu": 0.05, "grid": [1.0, 0.1]}, {"seed": 7},
                       extra={"n_eval": 100000})
    on_disk = json.loads((tmp_path / "manifest.json").read_text())
    assert on_disk["command"] == "fit" and on_disk["seeds"] == {"seed": 7}
    assert on_disk["config"]["grid"] == [1.0, 0.1] and on_disk["n_eval"] == 100000
    assert set(on_disk["versions"]) >= {"noisyplr", "python", "numpy", "scipy"}
    assert m["command"] == "fit"
