"""Binary matrix file: magic, row count, column count, row-major float64 LE."""

from __future__ import annotations

import struct

import numpy as np

from .errors import ParseError

MATRIX_MAGIC = b"EVCOREF.MAT.1\n"


def write_matrix(path, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError("write_matrix expects a 1- or 2-d array")
    with open(path, "wb") as out:
        out.write(MATRIX_MAGIC)
        out.write(struct.pack("<QQ", arr.shape[0], arr.shape[1]))
        out.write(arr.tobytes())


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as handle:
        magic = handle.read(len(MATRIX_MAGIC))
        if magic != MATRIX_MAGIC:
            raise ParseError(path, 1, "not a matrix file (bad magic)")
        header = handle.read(16)
        if len(header) != 16:
            raise ParseError(path, 1, "truncated matrix header")
        rows, cols = struct.unpack("<QQ", header)
        data = np.frombuffer(handle.read(), dtype="<f8")
    if data.size != rows * cols:
        raise ParseError(path, 1, f"expected {rows * cols} values, found {data.size}")
    return data.reshape(rows, cols).astype(np.float64)
