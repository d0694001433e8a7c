"""Writer (and verifying reader) for the exchange container format.

The consumer side of this format lives in a separate package; the byte
layout is the shared contract, so it is implemented here natively rather
than imported. All integers little-endian:

    magic "PRCC" | version u32 (=1) | section count u32
    per section: tag 16 bytes ASCII NUL-padded | dtype u32 (1=f32, 2=f64)
                 | rows u64 | dim u32 | row-major payload
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"PRCC"
VERSION = 1
DTYPE_SINGLE = 1
DTYPE_DOUBLE = 2
_DTYPES = {DTYPE_SINGLE: np.dtype("<f4"), DTYPE_DOUBLE: np.dtype("<f8")}

_FILE_HEADER = struct.Struct("<4sII")
_SECTION_HEADER = struct.Struct("<16sIQI")


class ContainerFormatError(Exception):
    pass


@dataclass
class Section:
    tag: str
    dtype: int
    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data), dtype=_DTYPES[self.dtype])
        if arr.ndim == 1:
            arr = arr[:, None]
        self.data = arr


def write_container(path, sections) -> int:
    blob = bytearray(_FILE_HEADER.pack(MAGIC, VERSION, len(sections)))
    for section in sections:
        rows, dim = section.data.shape
        blob += _SECTION_HEADER.pack(
            section.tag.encode("ascii").ljust(16, b"\x00"), section.dtype, rows, dim
        )
        blob += section.data.tobytes(order="C")
    Path(path).write_bytes(bytes(blob))
    return len(blob)


def read_container(path) -> list[Section]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ContainerFormatError(f"{path}: bad magic")
    _, version, count = _FILE_HEADER.unpack_from(raw, 0)
    if version != VERSION:
        raise ContainerFormatError(f"{path}: unsupported version {version}")
    offset = _FILE_HEADER.size
    out = []
    for _ in range(count):
        tag, dtype, rows, dim = _SECTION_HEADER.unpack_from(raw, offset)
        offset += _SECTION_HEADER.size
        if dtype not in _DTYPES:
            raise ContainerFormatError(f"{path}: dtype code {dtype}")
        n = rows * dim * _DTYPES[dtype].itemsize
        if offset + n > len(raw):
            raise ContainerFormatError(f"{path}: truncated payload")
        data = np.frombuffer(raw, dtype=_DTYPES[dtype], count=rows * dim, offset=offset)
        out.append(Section(tag.rstrip(b"\x00").decode("ascii"), dtype, data.reshape(rows, dim).copy()))
        offset += n
    return out
