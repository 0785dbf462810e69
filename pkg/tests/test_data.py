import json
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from fairfilter.data import (
    Column, DataFormatError, DatasetSchema, SchemaError, builtin_schema, load_csv, load_schema,
    split_train_test,
)


def toy_schema(**kw):
    base = dict(
        columns=(Column("x", "numeric"), Column("c", "categorical"),
                 Column("g", "categorical"), Column("y", "categorical")),
        protected_attribute="g", privileged_value="m",
        label_column="y", favorable_value="1",
        missing_token="?",
    )
    base.update(kw)
    return DatasetSchema(**base)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_schema_rejects_unknown_roles():
    with pytest.raises(SchemaError, match="protected_attribute"):
        toy_schema(protected_attribute="nope")
    with pytest.raises(SchemaError, match="label_column"):
        toy_schema(label_column="nope")


def test_schema_json_roundtrip(tmp_path):
    s = toy_schema(value_map={"g": {"M": "m"}})
    p = tmp_path / "s.json"
    p.write_text(json.dumps(s.to_dict()))
    assert load_schema(p) == s


def test_builtin_schemas_have_expected_shape():
    adult = builtin_schema("adult")
    german = builtin_schema("german")
    assert len(adult.columns) == 15 and adult.delimiter == ","
    assert len(german.columns) == 21 and german.delimiter == " "
    assert german.value_map["sex"]["A92"] == "female"
    assert german.value_map["credit_risk"] == {"1": "good", "2": "bad"}


def test_load_basic_and_missing_rows(tmp_path):
    p = write(tmp_path, "1, a, m, 1\n2, ?, f, 0\n3, b, f, 0\n\n4, a, m, 0\n")
    d = load_csv(p, toy_schema())
    assert len(d) == 3
    assert d.dropped == 1
    assert d.raw_line_count == 4
    assert d.row_ids == (0, 2, 3)
    assert d.protected_counts() == {"f": 1, "m": 2}
    assert d.raw_protected_counts == {"f": 2, "m": 2}
    assert d.rows[0] == ("1", "a", "m", "1")


def test_load_empty_file(tmp_path):
    d = load_csv(write(tmp_path, ""), toy_schema())
    assert len(d) == 0 and d.dropped == 0


def test_malformed_width_names_line(tmp_path):
    p = write(tmp_path, "1, a, m, 1\n2, b, f\n")
    with pytest.raises(DataFormatError, match="line 2"):
        load_csv(p, toy_schema())


def test_non_binary_protected_names_value(tmp_path):
    p = write(tmp_path, "1, a, m, 1\n2, b, f, 0\n3, b, X92, 0\n")
    with pytest.raises(DataFormatError, match="X92"):
        load_csv(p, toy_schema())


def test_value_map_applied_before_binarity(tmp_path):
    p = write(tmp_path, "1 a A91 1\n2 b A92 2\n3 b A93 2\n", "g.txt")
    s = toy_schema(delimiter=" ", favorable_value="good",
                   value_map={"g": {"A91": "m", "A93": "m", "A92": "f"}, "y": {"1": "good", "2": "bad"}})
    d = load_csv(p, s)
    assert d.protected_counts() == {"f": 1, "m": 2}
    assert d.label_counts() == {"bad": 2, "good": 1}


def test_header_rows_skipped(tmp_path):
    p = write(tmp_path, "x,c,g,y\n1,a,m,1\n2,b,f,0\n")
    d = load_csv(p, toy_schema(header_rows=1))
    assert len(d) == 2


def _balanced(tmp_path, sizes):
    lines = []
    cells = [("m", "1"), ("m", "0"), ("f", "1"), ("f", "0")]
    for (g, y), n in zip(cells, sizes):
        lines += [f"{i}, a, {g}, {y}" for i in range(n)]
    return load_csv(write(tmp_path, "\n".join(lines) + "\n"), toy_schema())


def test_split_partition_and_determinism(tmp_path):
    d = _balanced(tmp_path, (25, 25, 25, 25))
    tr, te = split_train_test(d, 0.3, seed=7)
    assert (len(tr), len(te)) == (70, 30)
    assert set(tr.row_ids).isdisjoint(te.row_ids)
    assert sorted(tr.row_ids + te.row_ids) == list(d.row_ids)
    tr2, te2 = split_train_test(d, 0.3, seed=7)
    assert tr2.row_ids == tr.row_ids and te2.row_ids == te.row_ids
    _, te3 = split_train_test(d, 0.3, seed=8)
    assert te3.row_ids != te.row_ids


def test_split_stratum_arithmetic(tmp_path):
    d = _balanced(tmp_path, (50, 0, 0, 50))
    _, te = split_train_test(d, 0.3, seed=0)
    assert Counter(te.strata()) == {("m", "1"): 15, ("f", "0"): 15}


def test_split_rejects_tiny_stratum(tmp_path):
    d = _balanced(tmp_path, (10, 1, 10, 10))
    with pytest.raises(ValueError, match="fewer than 2"):
        split_train_test(d, 0.3, seed=0)


@pytest.mark.parametrize("frac", [0.0, 1.0, -0.1])
def test_split_rejects_bad_fraction(tmp_path, frac):
    d = _balanced(tmp_path, (5, 5, 5, 5))
    with pytest.raises(ValueError):
        split_train_test(d, frac, seed=0)


@settings(max_examples=50, deadline=None)
@given(sizes=st.lists(st.integers(2, 40), min_size=4, max_size=4),
       frac=st.floats(0.05, 0.95), seed=st.integers(0, 2**31))
def test_split_is_a_stratified_partition(tmp_path_factory, sizes, frac, seed):
    d = _balanced(tmp_path_factory.mktemp("s"), sizes)
    tr, te = split_train_test(d, frac, seed)
    assert sorted(tr.row_ids + te.row_ids) == list(d.row_ids)
    assert len(te) == round(len(d) * frac)
    per_cell = Counter(te.strata())
    for cell, n in Counter(d.strata()).items():
        assert int(n * frac) <= per_cell.get(cell, 0) <= int(n * frac) + 1


def test_adult_totals_and_split_conservation(adult_path):
    d = load_csv(adult_path, builtin_schema("adult"))
    assert d.raw_protected_counts == {"Female": 10771, "Male": 21790}
    assert len(d) + d.dropped == d.raw_line_count == 32561
    tr, te = split_train_test(d, 0.3, seed=42)
    kept = d.protected_counts()
    dropped = {g: d.raw_protected_counts[g] - kept[g] for g in kept}
    for g in kept:
        assert tr.protected_counts()[g] + te.protected_counts()[g] + dropped[g] == d.raw_protected_counts[g]


def test_german_totals(german_path):
    d = load_csv(german_path, builtin_schema("german"))
    assert d.protected_counts() == {"female": 310, "male": 690}
    assert d.label_counts() == {"bad": 300, "good": 700}
    assert d.dropped == 0
