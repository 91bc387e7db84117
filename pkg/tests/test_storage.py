import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factoreg.storage import (
    AttributeKind,
    CsvOptions,
    Database,
    StorageError,
    categorical_column,
    load_csv,
    numeric_column,
    relation_from_rows,
    union_column,
    write_csv,
)

NUM = AttributeKind.NUMERIC
CAT = AttributeKind.CATEGORICAL


def test_numeric_column_masks_nulls():
    col = numeric_column([1.0, None, 3.5])
    assert col.kind is NUM
    assert col.valid.tolist() == [True, False, True]
    assert col.coalesced().tolist() == [1.0, 0.0, 3.5]
    assert col.data[0] == 1.0 and col.data[2] == 3.5


def test_categorical_column_encodes_labels():
    col = categorical_column(["a", "b", None, "a"])
    assert col.kind is CAT
    assert col.valid.tolist() == [True, True, False, True]
    assert col.decode(0) == "a"
    assert col.decode(3) == "a"
    assert col.decode(2) is None
    assert col.data[0] == col.data[3]
    assert col.data[0] != col.data[1]


def test_column_take_preserves_validity():
    col = numeric_column([1.0, None, 3.0])
    picked = col.take(np.array([2, 1, 1, 0]))
    assert picked.valid.tolist() == [True, False, False, True]
    assert picked.coalesced().tolist() == [3.0, 0.0, 0.0, 1.0]


def test_relation_from_rows_schema_and_access():
    rel = relation_from_rows("R", [("a", NUM), ("b", CAT)], [(1.0, "x"), (None, None)])
    assert rel.attributes == ("a", "b")
    assert rel.n_rows == 2
    assert rel.kind_of("a") is NUM
    assert rel.row(0) == (1.0, "x")
    assert rel.row(1) == (None, None)


def test_relation_row_count_mismatch_rejected():
    with pytest.raises(StorageError):
        relation_from_rows("R", [("a", NUM)], [(1.0, 2.0)])


def test_database_add_and_replace():
    db = Database()
    db.add(relation_from_rows("R", [("a", NUM)], [(1.0,)]))
    assert "R" in db and db["R"].n_rows == 1
    with pytest.raises(StorageError):
        db.add(relation_from_rows("R", [("a", NUM)], []))
    db.add(relation_from_rows("R", [("a", NUM)], [(2.0,), (3.0,)]), replace=True)
    assert db["R"].n_rows == 2
    assert db.names() == ("R",)


def test_csv_round_trip(tmp_path):
    rel = relation_from_rows(
        "R",
        [("a", NUM), ("b", CAT), ("c", NUM)],
        [(1.0, "u", None), (-2.25, None, 4.0), (None, "v w", 0.0)],
    )
    path = tmp_path / "r.csv"
    write_csv(rel, path)
    back = load_csv(path, "R", [("a", NUM), ("b", CAT), ("c", NUM)])
    assert back.n_rows == rel.n_rows
    for i in range(rel.n_rows):
        assert back.row(i) == rel.row(i)


def test_csv_integer_values_written_without_fraction(tmp_path):
    rel = relation_from_rows("R", [("a", NUM)], [(3.0,), (2.5,)])
    path = tmp_path / "r.csv"
    write_csv(rel, path)
    body = path.read_text().splitlines()
    assert body[1] == "3"
    assert body[2] == "2.5"


def test_csv_header_mismatch_rejected(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("a,WRONG\n1,2\n")
    with pytest.raises(StorageError) as err:
        load_csv(path, "R", [("a", NUM), ("b", NUM)])
    assert "WRONG" in str(err.value)


def test_csv_bad_numeric_cell_reports_line(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("a\n1\nnope\n")
    with pytest.raises(StorageError) as err:
        load_csv(path, "R", [("a", NUM)])
    assert ":3:1:" in str(err.value)
    assert "nope" in str(err.value)


def test_csv_custom_null_token(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("a|b\nNA|x\n2|NA\n")
    opts = CsvOptions(delimiter="|", null_token="NA")
    rel = load_csv(path, "R", [("a", NUM), ("b", CAT)], opts)
    assert rel.row(0) == (None, "x")
    assert rel.row(1) == (2.0, None)


def test_union_column_stacks_storing_relations():
    db = Database()
    db.add(relation_from_rows("R1", [("x", NUM)], [(1.0,), (None,)]))
    db.add(relation_from_rows("R2", [("x", NUM), ("z", NUM)], [(5.0, 0.0)]))
    values, valid = union_column(db, "x", ("R1", "R2"))
    assert values.tolist() == [1.0, 0.0, 5.0]
    assert valid.tolist() == [True, False, True]


rows_strategy = st.lists(
    st.tuples(
        st.one_of(st.none(), st.floats(allow_nan=False, allow_infinity=False, width=32)),
        st.one_of(st.none(), st.text(alphabet="abcxyz,| ", min_size=1, max_size=6)),
    ),
    max_size=25,
)


@settings(max_examples=60, deadline=None)
@given(rows=rows_strategy)
def test_csv_round_trip_property(tmp_path_factory, rows):
    rel = relation_from_rows("R", [("a", NUM), ("b", CAT)], rows)
    path = tmp_path_factory.mktemp("csv") / "r.csv"
    write_csv(rel, path)
    back = load_csv(path, "R", [("a", NUM), ("b", CAT)])
    assert back.n_rows == rel.n_rows
    for i in range(rel.n_rows):
        assert back.row(i) == rel.row(i)
