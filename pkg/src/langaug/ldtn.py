"""LDTN binary tensor files.

Layout: magic ``4C 44 54 4E`` ("LDTN"), version byte (1), dtype byte
(0 = float32, 1 = float64), ndim byte, one reserved byte, then ndim
little-endian uint64 dims, then the row-major little-endian payload.
Metadata rides in a sidecar ``<basename>.meta.json``.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import TensorFormatError, TensorPayloadError

MAGIC = b"LDTN"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def write_tensor(path, array: np.ndarray) -> None:
    array = np.asarray(array)
    if array.dtype not in _DTYPE_CODES:
        array = array.astype(np.float64)
    code = _DTYPE_CODES[array.dtype]
    payload = np.ascontiguousarray(array).astype(_DTYPES[code]).tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION, code, array.ndim, 0]))
        for d in array.shape:
            fh.write(struct.pack("<Q", d))
        fh.write(payload)


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise TensorFormatError(
            f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}"
        )
    version, code, ndim, _reserved = blob[4:8]
    if version != VERSION:
        raise TensorFormatError(f"{path}: unsupported version {version}")
    if code not in _DTYPES:
        raise TensorFormatError(f"{path}: unknown dtype byte {code}")
    header_end = 8 + 8 * ndim
    if len(blob) < header_end:
        raise TensorPayloadError(f"{path}: truncated dimension header")
    dims = struct.unpack(f"<{ndim}Q", blob[8:header_end]) if ndim else ()
    dtype = _DTYPES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(blob) - header_end != expected:
        raise TensorPayloadError(
            f"{path}: payload length {len(blob) - header_end} does not match "
            f"dims {dims} ({expected} bytes expected)"
        )
    arr = np.frombuffer(blob[header_end:], dtype=dtype)
    return arr.reshape(dims).copy()


def write_meta(basename, meta: dict) -> None:
    path = Path(str(basename) + ".meta.json")
    path.write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")


def read_meta(basename) -> dict:
    path = Path(str(basename) + ".meta.json")
    return json.loads(path.read_text(encoding="utf-8"))
