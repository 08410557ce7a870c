"""Binary matrix files: little-endian "KDYN" header plus row-major float64.

Header layout: 4-byte magic ``KDYN``, u32 version, u32 rows, u32 cols.  Image
tensors reuse the same container with rows = height and cols = 3 * width
(row-major RGB interleaved, channels scaled to [0, 1]).
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"KDYN"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


def write_matrix(path: str | Path, matrix: np.ndarray) -> None:
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {matrix.shape}")
    rows, cols = matrix.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, rows, cols))
        fh.write(matrix.astype("<f8").tobytes())


def read_matrix(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, version, rows, cols = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        payload = fh.read(rows * cols * 8)
    if len(payload) != rows * cols * 8:
        raise ValueError(f"{path}: truncated payload")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(np.float64)


def write_matrix_csv(path: str | Path, matrix: np.ndarray,
                     columns: Sequence[str]) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != len(columns):
        raise ValueError("matrix shape does not match column names")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in matrix:
            writer.writerow([repr(float(v)) for v in row])


def write_image_tensor(path: str | Path, pixels: np.ndarray) -> None:
    """Store an H x W x 3 8-bit image as a rows=H, cols=3W float matrix in [0, 1]."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 image, got shape {pixels.shape}")
    h, w, _ = pixels.shape
    write_matrix(path, pixels.astype(np.float64).reshape(h, w * 3) / 255.0)


def read_image_tensor(path: str | Path) -> np.ndarray:
    """Inverse of write_image_tensor; returns H x W x 3 uint8 pixels."""
    mat = read_matrix(path)
    h, cols = mat.shape
    if cols % 3 != 0:
        raise ValueError(f"{path}: column count {cols} is not a multiple of 3")
    scaled = np.rint(mat * 255.0).astype(np.uint8)
    return scaled.reshape(h, cols // 3, 3)
