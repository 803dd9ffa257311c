import math

import numpy as np
import pytest

from frnet import data
from frnet.data import MISSING, DataError, RawTable


def table(rows, names=("a", "b")):
    return RawTable(list(names), np.array([r[0] for r in rows]), [list(r[1:]) for r in rows])


def test_discretize_missing():
    assert data.discretize_numeric(None) == MISSING
    assert data.discretize_numeric("") == MISSING


def test_discretize_passthrough_below_threshold():
    assert data.discretize_numeric(2) == "2"
    assert data.discretize_numeric(0) == "0"
    assert data.discretize_numeric("1.4") == "1"


def test_discretize_log_squared():
    assert math.log(100) ** 2 == pytest.approx(21.2076, abs=1e-4)
    assert data.discretize_numeric(100) == "21"


def test_discretize_negative_names_record():
    with pytest.raises(DataError, match="record 7"):
        data.discretize_numeric(-1, index=7)


def test_vocab_folds_rare_tokens():
    rows = [(1, "a", "x")] * 12 + [(0, "b", "x")] * 3
    v = data.build_vocab(table(rows), min_feature_count=10)
    fa = v.fields[0]
    assert "a" in fa.index and "b" not in fa.index
    assert fa.lookup("b") == fa.unknown_index == 0
    assert fa.counts[data.UNKNOWN] == 3


def test_vocab_threshold_one_keeps_everything():
    rows = [(1, "a", "x"), (0, "b", "y"), (0, "c", "y")]
    v = data.build_vocab(table(rows), min_feature_count=1)
    assert len(v.fields[0]) == 4  # unknown + a, b, c
    assert v.num_features == 4 + 3


def test_vocab_all_folded_leaves_only_unknown():
    rows = [(1, "t", "x")] * 9
    v = data.build_vocab(table(rows), min_feature_count=10)
    assert list(v.fields[0].index) == [data.UNKNOWN]


def test_vocab_first_seen_order_and_contiguity():
    rows = [(1, "z", "x"), (0, "a", "x"), (0, "m", "x")]
    fv = data.build_vocab(table(rows)).fields[0]
    assert [fv.index[t] for t in ("z", "a", "m")] == [1, 2, 3]
    assert sorted(fv.index.values()) == list(range(len(fv)))


def test_ragged_record_rejected():
    t = RawTable(["a", "b"], np.array([1]), [["x"]])
    with pytest.raises(DataError, match="ragged"):
        data.build_vocab(t)


def test_encode_unseen_token_maps_to_unknown():
    v = data.build_vocab(table([(1, "a", "x"), (0, "b", "y")]))
    ds = data.encode(table([(1, "never", "y")]), v)
    assert ds.features[0, 0] == 0
    assert ds.features[0, 1] == v.offsets[1] + v.fields[1].index["y"]


def test_encode_is_stable():
    t = table([(1, "a", "x"), (0, "b", "y")])
    v = data.build_vocab(t)
    np.testing.assert_array_equal(data.encode(t, v).features, data.encode(t, v).features)


def test_encode_record_rejects_bad_label():
    v = data.build_vocab(table([(1, "a", "x")]))
    with pytest.raises(DataError):
        data.encode_record(2, ["a", "x"], v)


def test_dataset_feature_count_matches_vocab():
    t = table([(1, "a", "x"), (0, "b", "y"), (1, "a", "z")])
    v = data.build_vocab(t)
    ds = data.encode(t, v)
    assert ds.num_features == sum(len(f) for f in v.fields)
    assert ds.features.max() < ds.num_features


def test_frappe_split_sizes():
    assert data.split_sizes(288_609, (7, 2, 1)) == [202_027, 57_722, 28_860]


def test_split_deterministic_disjoint_exhaustive():
    a = data.split_indices(1000, (7, 2, 1), seed=3)
    b = data.split_indices(1000, (7, 2, 1), seed=3)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
    allidx = np.concatenate(a)
    assert len(allidx) == 1000 and len(np.unique(allidx)) == 1000
    c = data.split_indices(1000, (7, 2, 1), seed=4)
    assert not np.array_equal(a[0], c[0])


def _write(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_read_table_and_numeric_fields(tmp_path):
    p = _write(tmp_path / "d.csv", ["label,cat,num", "1,a,100", "0,,1", "1,b,"])
    t = data.read_table(p, numeric_fields=["num"])
    assert t.field_names == ["cat", "num"]
    assert t.tokens == [["a", "21"], [MISSING, "1"], ["b", MISSING]]
    assert t.labels.tolist() == [1, 0, 1]


def test_read_table_requires_label_column(tmp_path):
    p = _write(tmp_path / "d.csv", ["click,a", "1,x"])
    with pytest.raises(DataError, match="d.csv"):
        data.read_table(p)


def test_read_table_rejects_bad_label(tmp_path):
    p = _write(tmp_path / "d.csv", ["label,a", "3,x"])
    with pytest.raises(DataError, match="label"):
        data.read_table(p)


def test_tab_delimiter(tmp_path):
    p = _write(tmp_path / "d.tsv", ["label\ta\tb", "1\tx\ty"])
    assert data.read_table(p, delimiter="\t").tokens == [["x", "y"]]


def test_vocab_built_on_train_only(tmp_path):
    tr = _write(tmp_path / "tr.csv", ["label,a", "1,x", "0,y"])
    va = _write(tmp_path / "va.csv", ["label,a", "1,x", "0,new"])
    te = _write(tmp_path / "te.csv", ["label,a", "1,other", "0,y"])
    a, b, c = data.load_splits(train=tr, val=va, test=te)
    assert a.num_features == b.num_features == c.num_features == 3
    assert b.features[1, 0] == 0 and c.features[0, 0] == 0


def test_vocab_dump_round_trip(tmp_path):
    t = table([(1, "a", "x"), (0, "b", "y"), (1, "a", "x")])
    v = data.build_vocab(t)
    v.dump(tmp_path / "vocab.tsv")
    lines = (tmp_path / "vocab.tsv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "field\ttoken\tindex\tcount"
    assert "a\ta\t1\t2" in lines
    v2 = data.Vocab.load(tmp_path / "vocab.tsv")
    np.testing.assert_array_equal(data.encode(t, v).features, data.encode(t, v2).features)
