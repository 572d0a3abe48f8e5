import numpy as np
import pytest

from evcoref.errors import ParseError
from evcoref.matio import read_matrix, write_matrix


def test_matrix_roundtrip(tmp_path, rng):
    x = rng.normal(size=(17, 33))
    path = tmp_path / "x.mat"
    write_matrix(path, x)
    assert np.array_equal(read_matrix(path), x)


def test_vector_becomes_single_row(tmp_path):
    path = tmp_path / "v.mat"
    write_matrix(path, np.arange(5.0))
    out = read_matrix(path)
    assert out.shape == (1, 5)


def test_empty_matrix(tmp_path):
    path = tmp_path / "e.mat"
    write_matrix(path, np.zeros((0, 7)))
    assert read_matrix(path).shape == (0, 7)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.mat"
    path.write_bytes(b"garbage here")
    with pytest.raises(ParseError, match="magic"):
        read_matrix(path)


def test_truncated_payload_rejected(tmp_path, rng):
    path = tmp_path / "t.mat"
    write_matrix(path, rng.normal(size=(4, 4)))
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(ParseError, match="expected"):
        read_matrix(path)


def test_writes_are_deterministic(tmp_path, rng):
    x = rng.normal(size=(6, 6))
    a, b = tmp_path / "a.mat", tmp_path / "b.mat"
    write_matrix(a, x)
    write_matrix(b, x)
    assert a.read_bytes() == b.read_bytes()
