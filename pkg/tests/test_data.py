import numpy as np
import pytest

from brail.data import (Block, Domain, MultiViewDesign, blocks_from_widths, check_coverage,
                        load_csv, schema_for, standardize, write_csv)
from brail.errors import ParseError, RejectedInputError


def _blocks():
    return blocks_from_widths([2, 1], [Domain.CONTINUOUS, Domain.BINARY], ["A", "B"])


def test_standardize_uses_sample_sd(rng):
    raw = rng.standard_normal((50, 3)) * [1, 2, 3] + 5
    mv = standardize(raw, _blocks())
    np.testing.assert_allclose(mv.X.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(mv.X.std(axis=0, ddof=1), 1, rtol=1e-12)
    np.testing.assert_allclose(mv.col_sds, raw.std(axis=0, ddof=1))


def test_constant_column_rejected():
    raw = np.column_stack([np.arange(5.0), np.arange(5.0) ** 2, np.ones(5)])
    with pytest.raises(RejectedInputError, match="constant"):
        standardize(raw, _blocks())


def test_raw_scale_back_transform(rng):
    raw = rng.standard_normal((20, 3)) * 4
    mv = standardize(raw, _blocks())
    beta = np.array([1.0, -2.0, 0.5])
    # raw-scale coefficients reproduce the same fitted values up to the intercept
    lhs = mv.X @ beta
    rhs = raw @ mv.to_raw_scale(beta)
    np.testing.assert_allclose(lhs - lhs.mean(), rhs - rhs.mean(), atol=1e-10)


def test_design_is_read_only_copy(rng):
    raw = rng.standard_normal((6, 3))
    mv = MultiViewDesign(raw, _blocks(), raw.mean(0), raw.std(0), False)
    raw[0, 0] = 99.0
    assert mv.X[0, 0] != 99.0
    with pytest.raises(ValueError):
        mv.X[0, 0] = 1.0


@pytest.mark.parametrize("blocks,p", [
    ([Block("A", "continuous", 0, 2), Block("B", "binary", 1, 3)], 3),
    ([Block("A", "continuous", 0, 2)], 3),
    ([Block("A", "continuous", 0, 1), Block("A", "binary", 1, 3)], 3),
    ([], 0),
])
def test_coverage_violations(blocks, p):
    with pytest.raises(RejectedInputError):
        check_coverage(blocks, p)


def test_block_properties():
    b = Block("A", "count", 2, 5)
    assert b.p == 3 and b.domain is Domain.COUNT
    np.testing.assert_array_equal(b.indices, [2, 3, 4])


def test_subset_columns_shrinks_blocks(rng):
    mv = standardize(rng.standard_normal((10, 3)), _blocks())
    sub = mv.subset_columns([0, 2])
    assert [b.p for b in sub.blocks] == [1, 1]
    sub = mv.subset_columns([0, 1])
    assert [b.name for b in sub.blocks] == ["A"]


def _write(path, text):
    path.write_text(text)
    return str(path)


SCHEMA = {"A": {"domain": "continuous", "columns": ["a1", "a2"]},
          "B": {"domain": "binary", "columns": ["b1"]}}


def test_csv_round_trip(tmp_path, rng):
    raw = np.column_stack([rng.standard_normal((7, 2)), rng.integers(0, 2, 7)])
    names = ["a1", "a2", "b1"]
    path = str(tmp_path / "x.csv")
    write_csv(path, raw, names)
    back, blocks, got_names = load_csv(path, SCHEMA)
    np.testing.assert_array_equal(back, raw)
    assert got_names == names
    assert schema_for(blocks, np.array(names, dtype=object)) == SCHEMA


def test_csv_reorders_to_schema(tmp_path):
    path = _write(tmp_path / "x.csv", "b1,extra,a2,a1\n1,9,2.5,3\n0,9,1,2\n")
    raw, blocks, names = load_csv(path, SCHEMA)
    assert names == ["a1", "a2", "b1"]
    np.testing.assert_array_equal(raw, [[3, 2.5, 1], [2, 1, 0]])


@pytest.mark.parametrize("body,row,col", [
    ("a1,a2,b1\n1,2,1\n1,,0\n", 2, "a2"),
    ("a1,a2,b1\n1,x,1\n", 1, "a2"),
    ("a1,a2,b1\n1,2,1\n1,2,2\n", 2, "b1"),
    ("a1,a2,b1\n1,2,1\n1,NA,1\n", 2, "a2"),
])
def test_csv_errors_name_the_cell(tmp_path, body, row, col):
    path = _write(tmp_path / "x.csv", body)
    with pytest.raises(ParseError) as info:
        load_csv(path, SCHEMA)
    assert info.value.row == row and info.value.column == col


def test_csv_missing_schema_column(tmp_path):
    path = _write(tmp_path / "x.csv", "a1,b1\n1,1\n")
    with pytest.raises(ParseError, match="a2"):
        load_csv(path, SCHEMA)


def test_csv_count_and_proportion_domains(tmp_path):
    schema = {"C": {"domain": "count", "columns": ["c"]},
              "P": {"domain": "proportion", "columns": ["q"]}}
    with pytest.raises(ParseError, match="count"):
        load_csv(_write(tmp_path / "a.csv", "c,q\n1.5,0.2\n"), schema)
    with pytest.raises(ParseError, match="proportion"):
        load_csv(_write(tmp_path / "b.csv", "c,q\n1,1.2\n"), schema)


def test_csv_empty(tmp_path):
    with pytest.raises(ParseError):
        load_csv(_write(tmp_path / "e.csv", ""), SCHEMA)
    with pytest.raises(RejectedInputError):
        load_csv(_write(tmp_path / "x.csv", "a1,a2,b1\n"), SCHEMA)


def test_standardize_examples(rng):
    mv = standardize(np.array([[1.0], [2.0], [3.0]]), [Block("A", "continuous", 0, 1)])
    np.testing.assert_allclose(mv.X[:, 0], [-1, 0, 1])
    raw = rng.standard_normal((10, 4))
    blocks = [Block("A", "continuous", 0, 4)]
    once = standardize(raw, blocks)
    assert np.abs(once.X.mean(0)).max() < 1e-10
    assert np.abs(once.X.std(0, ddof=1) - 1).max() < 1e-10
    np.testing.assert_allclose(standardize(once.X, blocks).X, once.X, atol=1e-12)


def test_csv_small_example(tmp_path):
    path = _write(tmp_path / "x.csv", "a,b\n1,0\n2,1")
    schema = {"A": {"domain": "continuous", "columns": ["a"]},
              "B": {"domain": "binary", "columns": ["b"]}}
    raw, blocks, _ = load_csv(path, schema)
    np.testing.assert_array_equal(raw, [[1, 0], [2, 1]])
    assert [b.domain for b in blocks] == [Domain.CONTINUOUS, Domain.BINARY]
