"""Binary parameter serialization.

Layout (all integers little-endian uint64, floats little-endian f8):

    magic b"MCNN0001"
    n_entries
    per entry: name_len, name (utf-8), ndim, dims...
    per entry: raw f8 data in C order, in the same (sorted-name) order

Entries are sorted by name so the byte stream is a canonical function
of the parameter state.
"""

from __future__ import annotations

import io
from typing import BinaryIO, Dict

import numpy as np

MAGIC = b"MCNN0001"


class SerializationError(ValueError):
    pass


def _write_u64(fh: BinaryIO, value: int) -> None:
    fh.write(np.array(value, dtype="<u8").tobytes())


def _read_u64(fh: BinaryIO) -> int:
    raw = fh.read(8)
    if len(raw) != 8:
        raise SerializationError("truncated stream")
    return int(np.frombuffer(raw, dtype="<u8")[0])


def save_params(fh: BinaryIO, state: Dict[str, np.ndarray]) -> None:
    names = sorted(state)
    fh.write(MAGIC)
    _write_u64(fh, len(names))
    for name in names:
        encoded = name.encode("utf-8")
        _write_u64(fh, len(encoded))
        fh.write(encoded)
        arr = state[name]
        _write_u64(fh, arr.ndim)
        for d in arr.shape:
            _write_u64(fh, d)
    for name in names:
        fh.write(np.ascontiguousarray(state[name], dtype="<f8").tobytes())


def load_params(fh: BinaryIO) -> Dict[str, np.ndarray]:
    if fh.read(len(MAGIC)) != MAGIC:
        raise SerializationError("bad magic bytes")
    n = _read_u64(fh)
    shapes = []
    for _ in range(n):
        name_len = _read_u64(fh)
        name = fh.read(name_len).decode("utf-8")
        ndim = _read_u64(fh)
        shape = tuple(_read_u64(fh) for _ in range(ndim))
        shapes.append((name, shape))
    out: Dict[str, np.ndarray] = {}
    for name, shape in shapes:
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = fh.read(count * 8)
        if len(raw) != count * 8:
            raise SerializationError(f"truncated data for {name!r}")
        out[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
    return out


def dumps(state: Dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    save_params(buf, state)
    return buf.getvalue()


def loads(data: bytes) -> Dict[str, np.ndarray]:
    return load_params(io.BytesIO(data))
