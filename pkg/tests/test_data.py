import itertools

import numpy as np
import pytest

from mixdisc.data import Dataset, MixedObservation, cell_patterns, decode_cell, encode_cell, encode_cells, load_csv, write_csv
from mixdisc.errors import DataValidationError

from conftest import random_dataset


@pytest.mark.parametrize("y, m", [((0, 0, 0), 1), ((1, 0, 0), 2), ((1, 1, 1), 8), ((0, 0, 1), 5)])
def test_encode_cell_examples(y, m):
    assert encode_cell(y) == m
    assert decode_cell(m, 3) == y


def test_encode_rejects_non_binary_and_names_index():
    with pytest.raises(DataValidationError, match="2"):
        encode_cell((0, 1, 2))


@pytest.mark.parametrize("m", [0, 9, -1])
def test_decode_out_of_range(m):
    with pytest.raises(DataValidationError):
        decode_cell(m, 3)


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_encode_decode_bijection(d):
    cells = [encode_cell(y) for y in itertools.product((0, 1), repeat=d)]
    assert sorted(cells) == list(range(1, 2**d + 1))
    for m in range(1, 2**d + 1):
        assert encode_cell(decode_cell(m, d)) == m
    assert [encode_cell(r) for r in cell_patterns(d)] == list(range(1, 2**d + 1))


def test_encode_cells_vectorised(rng):
    Y = rng.integers(0, 2, size=(50, 3))
    assert encode_cells(Y).tolist() == [encode_cell(y) for y in Y]


def test_dataset_invariants(rng):
    ds = random_dataset(rng, 30, 2, 2, 3)
    assert (ds.n, ds.p, ds.d, ds.M, ds.q) == (30, 2, 2, 4, 3)
    assert ds.counts().sum() == 30
    assert not ds.X.flags.writeable
    obs = list(ds)
    assert isinstance(obs[0], MixedObservation)
    assert Dataset.from_observations(obs, q=3).same_as(ds)


@pytest.mark.parametrize(
    "X, Y, z, q",
    [
        ([[np.nan]], [[0]], [1], 1),
        ([[0.0]], [[2]], [1], 1),
        ([[0.0]], [[0]], [3], 2),
        ([[0.0]], [[0]], [0], 1),
        (np.zeros((0, 1)), np.zeros((0, 1)), [], 1),
    ],
)
def test_dataset_rejects_invalid(X, Y, z, q):
    with pytest.raises(DataValidationError):
        Dataset(np.asarray(X, float), np.asarray(Y), np.asarray(z, int), q=q)


def _write(tmp_path, text):
    f = tmp_path / "d.csv"
    f.write_text(text)
    return f


def test_load_csv_four_rows(tmp_path):
    f = _write(tmp_path, "x1,x2,y1,z\n0.5,1e-3,0,1\n-1,2,1,1\n3,4,0,2\n5,6,1,2\n")
    ds = load_csv(f, p=2, d=1, q=2)
    assert (ds.n, ds.M, ds.q) == (4, 2, 2)
    assert ds.X[0].tolist() == [0.5, 0.001]
    assert ds.U.tolist() == [1, 2, 1, 2]


@pytest.mark.parametrize(
    "body, row, pattern",
    [
        ("1,2,2,1\n", 2, "not 0 or 1"),
        ("1,2,0,1\n1,abc,0,2\n", 3, "non-numeric"),
        ("1,2,0,3\n", 2, "unknown group label"),
        ("1,,0,1\n", 2, "empty value"),
        ("1,2,0\n", 2, "missing field"),
    ],
)
def test_load_csv_errors_carry_row(tmp_path, body, row, pattern):
    f = _write(tmp_path, "x1,x2,y1,z\n" + body)
    with pytest.raises(DataValidationError, match=pattern) as exc:
        load_csv(f, p=2, d=1, q=2)
    assert exc.value.row == row
    assert f"row {row}" in str(exc.value)


def test_load_csv_header_only(tmp_path):
    with pytest.raises(DataValidationError, match="no observations"):
        load_csv(_write(tmp_path, "x1,x2,y1,z\n"), p=2, d=1, q=2)


def test_load_csv_missing_column(tmp_path):
    with pytest.raises(DataValidationError, match="x2"):
        load_csv(_write(tmp_path, "x1,y1,z\n1,0,1\n"), p=2, d=1, q=2)


def test_load_csv_custom_group_column_and_column_order(tmp_path):
    f = _write(tmp_path, "grp,y1,x1\n2,1,0.25\n1,0,-3\n")
    ds = load_csv(f, p=1, d=1, q=2, group_column="grp")
    assert ds.z.tolist() == [2, 1]
    assert ds.X[:, 0].tolist() == [0.25, -3.0]


def test_csv_round_trip(tmp_path, rng):
    ds = random_dataset(rng, 40, 3, 2, 3, scale=1e3)
    f = tmp_path / "rt.csv"
    write_csv(ds, f)
    again = load_csv(f, 3, 2, 3)
    assert again.same_as(ds)
    write_csv(again, tmp_path / "rt2.csv")
    assert (tmp_path / "rt2.csv").read_bytes() == f.read_bytes()


def test_take_and_drop(rng):
    ds = random_dataset(rng, 12, 2, 1, 2)
    dropped = ds.drop(3)
    assert dropped.n == 11
    assert np.array_equal(dropped.X, np.delete(ds.X, 3, axis=0))
    assert dropped.q == ds.q
