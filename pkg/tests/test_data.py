import gzip

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cubicvr.data import (
    FormatError,
    ParseError,
    load_dataset,
    make_onehot_surrogate,
    normalize_rows,
    parse_libsvm,
    read_libsvm,
    subsample,
    to_libsvm,
)


def test_single_line_zero_based():
    ds = parse_libsvm("1 1:0.5 3:2.0\n")
    assert ds.row(0) == [(0, 0.5), (2, 2.0)]
    assert ds.y[0] == 1.0
    assert ds.n_features >= 3


def test_default_label_map():
    ds = parse_libsvm("-1 2:1.0\n0 1:1\n+1 1:3\n")
    assert ds.y.tolist() == [0.0, 0.0, 1.0]


def test_threshold_label_map():
    ds = parse_libsvm("1 1:1\n2 1:1\n", binarize_threshold=1.5)
    assert ds.y.tolist() == [0.0, 1.0]


def test_bad_label_rejected():
    with pytest.raises(ParseError, match="line 2"):
        parse_libsvm("1 1:1\n3 1:1\n")


def test_malformed_token_reports_line():
    with pytest.raises(ParseError) as exc:
        parse_libsvm("1 1:1\n\n0 2:x\n")
    assert exc.value.lineno == 3


def test_decreasing_indices_format_error():
    with pytest.raises(FormatError):
        parse_libsvm("1 3:1 2:1\n")


def test_index_beyond_n_features():
    with pytest.raises(FormatError):
        parse_libsvm("1 5:1\n", n_features=4)


def test_empty_stream():
    with pytest.raises(ParseError, match="no samples"):
        parse_libsvm("\n# only a comment\n")


def test_explicit_dimension_kept():
    ds = parse_libsvm("1 2:1\n", n_features=54)
    assert ds.n_features == 54


def test_comments_and_iterables():
    ds = parse_libsvm(["1 1:1 # trailing\n", "0 2:2\n"])
    assert ds.n_samples == 2 and ds.row(1) == [(1, 2.0)]


def test_gzip_read(tmp_path):
    p = tmp_path / "toy.gz"
    with gzip.open(p, "wt") as fh:
        fh.write("1 1:1\n0 2:1\n")
    ds = read_libsvm(p)
    assert ds.n_samples == 2 and ds.meta["source"].endswith("toy.gz")


rows = st.lists(
    st.tuples(
        st.sampled_from([0.0, 1.0]),
        st.dictionaries(st.integers(0, 30), st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=False), max_size=6),
    ),
    min_size=1,
    max_size=12,
)


@settings(max_examples=60, deadline=None)
@given(rows)
def test_round_trip(sample):
    lines = []
    for label, feats in sample:
        toks = [str(int(label))] + [f"{j + 1}:{feats[j]!r}" for j in sorted(feats)]
        lines.append(" ".join(toks))
    ds = parse_libsvm("\n".join(lines), n_features=31)
    again = parse_libsvm(to_libsvm(ds), n_features=31)
    assert ds.equals(again)


def _toy(n=50, seed=0):
    return make_onehot_surrogate(n, seed=seed)


def test_subsample_full_is_permutation():
    ds = _toy()
    sub = subsample(ds, ds.n_samples, seed=3)
    a = sorted(map(tuple, (map(tuple, r) for r in ds.rows)))
    b = sorted(map(tuple, (map(tuple, r) for r in sub.rows)))
    assert a == b


def test_subsample_deterministic_and_shape():
    ds = _toy()
    a, b = subsample(ds, 20, 7), subsample(ds, 20, 7)
    assert a.equals(b)
    assert a.n_samples == 20 and a.n_features == ds.n_features


def test_subsample_seeds_differ():
    ds = _toy(200)
    subs = [subsample(ds, 30, s) for s in range(10)]
    distinct = {tuple(s.X.indices.tolist()) + tuple(s.y.tolist()) for s in subs}
    assert len(distinct) == 10


@pytest.mark.parametrize("m", [0, 51])
def test_subsample_bounds(m):
    with pytest.raises(ValueError):
        subsample(_toy(), m, 0)


def test_surrogate_shape():
    ds = make_onehot_surrogate(2000)
    assert ds.n_features == 123
    assert np.all(np.diff(ds.X.indptr) == 14)
    assert set(np.unique(ds.y)) <= {0.0, 1.0}
    assert 0.1 < ds.y.mean() < 0.4


def test_normalize_rows_unit():
    ds = normalize_rows(_toy())
    norms = np.sqrt(np.asarray(ds.X.multiply(ds.X).sum(axis=1)).ravel())
    np.testing.assert_allclose(norms, 1.0)


def test_load_dataset_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset("a9a", data_dir=tmp_path)


def test_load_dataset_known_dims(tmp_path):
    (tmp_path / "covtype.binary").write_text("1 1:1\n2 3:1\n")
    ds = load_dataset("covtype", data_dir=tmp_path)
    assert ds.n_features == 54 and ds.y.tolist() == [0.0, 1.0]


def test_full_a9a_counts():
    try:
        ds = load_dataset("a9a")
    except FileNotFoundError as exc:
        pytest.skip(f"a9a not available: {exc}")
    assert (ds.n_samples, ds.n_features) == (32561, 123)
    assert subsample(ds, 2000, 0).n_samples == 2000
