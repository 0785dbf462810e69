import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from fairfilter.data import Column, DatasetSchema, RawDataset, builtin_schema, load_csv, split_train_test
from fairfilter.preprocess import (
    DegenerateColumnWarning, UnseenCategoryWarning, association, cramers_v, encode,
    prune_correlated,
)

from oracles import chi2_by_hand


def test_cramers_v_worked_table():
    table = [[30, 10], [10, 30]]
    assert chi2_by_hand(table) == pytest.approx(20.0)
    assert cramers_v(np.array(table)) == pytest.approx(np.sqrt(20 / 80))
    assert cramers_v(np.array(table)) == pytest.approx(0.5)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.integers(1, 60), min_size=2, max_size=2), min_size=2, max_size=6))
def test_cramers_v_matches_scipy_chi2(table):
    t = np.array(table, dtype=float)
    chi2 = stats.chi2_contingency(t, correction=False)[0]
    expected = np.sqrt(chi2 / (t.sum() * (min(t.shape) - 1)))
    assert cramers_v(t) == pytest.approx(min(1.0, expected), abs=1e-12)


def test_association_identical_categorical_is_one():
    g = ["m", "f", "m", "f", "m"]
    assert association(g, g, "categorical") == pytest.approx(1.0)


def test_association_constant_feature_warns_zero():
    with pytest.warns(DegenerateColumnWarning):
        assert association(["a"] * 4, ["m", "f", "m", "f"], "categorical") == 0.0
    with pytest.warns(DegenerateColumnWarning):
        assert association([3.0] * 4, ["m", "f", "m", "f"], "numeric") == 0.0


def test_point_biserial_matches_scipy():
    rng = np.random.default_rng(3)
    g = rng.choice(["m", "f"], size=200)
    x = rng.normal(size=200) + (g == "m")
    expected = abs(stats.pointbiserialr((g == "m").astype(int), x)[0])
    assert association(x, list(g), "numeric") == pytest.approx(expected, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from("mf"), st.floats(-5, 5)),
                min_size=6, max_size=60))
def test_association_bounded_and_symmetric_in_relabeling(rows):
    cats, prot, nums = zip(*rows)
    flipped = ["f" if p == "m" else "m" for p in prot]
    if len(set(prot)) < 2:
        return
    for values, kind in ((cats, "categorical"), (nums, "numeric")):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateColumnWarning)
            a = association(list(values), list(prot), kind)
            b = association(list(values), flipped, kind)
        assert 0.0 <= a <= 1.0
        assert a == pytest.approx(b, abs=1e-12)


def _schema():
    return DatasetSchema(
        columns=(Column("num", "numeric"), Column("cat", "categorical"), Column("copy", "categorical"),
                 Column("g", "categorical"), Column("y", "categorical")),
        protected_attribute="g", privileged_value="m", label_column="y", favorable_value="1",
    )


def _raw(rows, schema=None):
    return RawDataset(schema=schema or _schema(), rows=tuple(rows), row_ids=tuple(range(len(rows))))


ROWS = [
    ("0", "a", "m", "m", "1"),
    ("5", "b", "f", "f", "0"),
    ("10", "c", "m", "m", "0"),
    ("5", "a", "f", "f", "1"),
]


def test_prune_drops_protected_copy_only():
    pruned, report = prune_correlated(_raw(ROWS), 0.8)
    assert report.dropped == ["copy"]
    assert pruned.schema.column_names == ["num", "cat", "g", "y"]
    assert all(len(r) == 4 for r in pruned.rows)
    assert {c.name for c in report.columns} == {"num", "cat", "copy"}


def test_prune_threshold_one_keeps_everything():
    pruned, report = prune_correlated(_raw(ROWS), 1.0)
    assert report.dropped == []
    assert pruned.schema == _schema()


def test_prune_rejects_bad_threshold():
    with pytest.raises(ValueError):
        prune_correlated(_raw(ROWS), 0.0)


def test_encode_minmax_and_onehot():
    train = _raw(ROWS)
    tr, te = encode(train, train)
    assert tr.columns == (("num", "numeric"), ("cat", "a"), ("cat", "b"), ("cat", "c"),
                          ("copy", "f"), ("copy", "m"))
    np.testing.assert_array_equal(tr.features[:, 0], [0.0, 0.5, 1.0, 0.5])
    np.testing.assert_array_equal(tr.features[:, 1:4].sum(axis=1), 1.0)
    assert tr.normalization_stats["num"] == (0.0, 10.0)
    assert tr.privileged.tolist() == [True, False, True, False]
    assert tr.favorable.tolist() == [True, False, False, True]


def test_encode_test_clipping_and_unseen_category():
    train = _raw(ROWS)
    test = _raw([("20", "z", "m", "m", "1"), ("-5", "a", "f", "f", "0")])
    with pytest.warns(UnseenCategoryWarning):
        _, te = encode(train, test)
    np.testing.assert_array_equal(te.features[:, 0], [1.0, 0.0])
    np.testing.assert_array_equal(te.features[0, 1:4], [0.0, 0.0, 0.0])
    assert te.unseen_categories == {"cat": 1}


def test_encode_constant_numeric_is_zero():
    rows = [("3", *r[1:]) for r in ROWS]
    with pytest.warns(DegenerateColumnWarning):
        tr, _ = encode(_raw(rows), _raw(rows))
    assert (tr.features[:, 0] == 0).all()


def test_encoded_matrix_never_carries_protected_or_label():
    tr, _ = encode(_raw(ROWS), _raw(ROWS))
    sources = {src for src, _ in tr.columns}
    assert "g" not in sources and "y" not in sources


def test_adult_encoding_invariants(adult_path):
    d = load_csv(adult_path, builtin_schema("adult"))
    train, test = split_train_test(d, 0.3, seed=42)
    train, report = prune_correlated(train, 0.8)
    assert len(report.columns) == 13
    assert all(0.0 <= c.score <= 1.0 for c in report.columns)
    tr, te = encode(train, test.with_schema(train.schema))
    assert tr.features.min() >= 0.0 and tr.features.max() <= 1.0
    assert te.features.min() >= 0.0 and te.features.max() <= 1.0
    for src in {s for s, v in tr.columns if v != "numeric"}:
        block = [i for i, (s, _) in enumerate(tr.columns) if s == src]
        np.testing.assert_array_equal(tr.features[:, block].sum(axis=1), 1.0)
        assert set(np.unique(te.features[:, block].sum(axis=1))) <= {0.0, 1.0}
    tr2, _ = encode(train, test.with_schema(train.schema))
    np.testing.assert_array_equal(tr.features, tr2.features)
