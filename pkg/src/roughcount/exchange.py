"""Bit-exact binary container for embeddings, labels, and checkpoints.

Layout (all integers little-endian):

    magic   4 bytes  b"PRCC"
    version u32      currently 1
    count   u32      number of sections
    then per section:
      tag    16 bytes ASCII, NUL padded
      dtype  u32      1 = IEEE-754 single, 2 = IEEE-754 double
      rows   u64
      dim    u32
      payload rows*dim values, row-major

Readers return every section and leave interpretation to the caller, so a
consumer simply ignores tags it does not know. write(read(file)) is
byte-identical for any valid file.

Higher-level codecs below pack adapter stores and toy encoders into single
sections using a meta row (row 0) followed by payload rows, padded to a
common width.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adapter import AdapterStore
from .errors import BadMagic, DTypeUnknown, TruncatedPayload, VersionUnsupported

MAGIC = b"PRCC"
VERSION = 1

DTYPE_SINGLE = 1
DTYPE_DOUBLE = 2
_DTYPES = {DTYPE_SINGLE: np.dtype("<f4"), DTYPE_DOUBLE: np.dtype("<f8")}

KNOWN_TAGS = ("EMB_IMG", "EMB_TXT", "COUNTS", "EXPERTS", "ADAPTER", "MODEL", "FEATS")

_TAG_LEN = 16
_SECTION_HEADER = struct.Struct("<16sIQI")
_FILE_HEADER = struct.Struct("<4sII")


@dataclass
class Section:
    tag: str
    dtype: int
    data: np.ndarray  # shape (rows, dim), dtype matching the code

    def __post_init__(self):
        if self.dtype not in _DTYPES:
            raise DTypeUnknown(f"dtype code {self.dtype}")
        arr = np.ascontiguousarray(np.asarray(self.data), dtype=_DTYPES[self.dtype])
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise ValueError(f"section data must be 2-D, got shape {arr.shape}")
        self.data = arr
        encoded = self.tag.encode("ascii")
        if len(encoded) > _TAG_LEN:
            raise ValueError(f"tag {self.tag!r} longer than {_TAG_LEN} bytes")


def write_container(path, sections) -> int:
    """Write sections to path; returns the byte count written."""
    blob = bytearray()
    blob += _FILE_HEADER.pack(MAGIC, VERSION, len(sections))
    for section in sections:
        if not isinstance(section, Section):
            section = Section(*section)
        rows, dim = section.data.shape
        blob += _SECTION_HEADER.pack(
            section.tag.encode("ascii").ljust(_TAG_LEN, b"\x00"),
            section.dtype,
            rows,
            dim,
        )
        blob += section.data.tobytes(order="C")
    data = bytes(blob)
    Path(path).write_bytes(data)
    return len(data)


def read_container(path) -> list[Section]:
    """Parse a container, validating magic, version, dtypes, and lengths."""
    raw = Path(path).read_bytes()
    if len(raw) < _FILE_HEADER.size or raw[:4] != MAGIC:
        raise BadMagic(f"{path}: not a {MAGIC.decode()} container")
    _, version, count = _FILE_HEADER.unpack_from(raw, 0)
    if version != VERSION:
        raise VersionUnsupported(f"{path}: version {version}, reader supports {VERSION}")
    offset = _FILE_HEADER.size
    sections: list[Section] = []
    for _ in range(count):
        if offset + _SECTION_HEADER.size > len(raw):
            raise TruncatedPayload(f"{path}: section header past end of file")
        tag_bytes, dtype, rows, dim = _SECTION_HEADER.unpack_from(raw, offset)
        offset += _SECTION_HEADER.size
        if dtype not in _DTYPES:
            raise DTypeUnknown(f"{path}: dtype code {dtype}")
        nbytes = rows * dim * _DTYPES[dtype].itemsize
        if offset + nbytes > len(raw):
            raise TruncatedPayload(
                f"{path}: section declares {nbytes} payload bytes, {len(raw) - offset} available"
            )
        data = np.frombuffer(raw, dtype=_DTYPES[dtype], count=rows * dim, offset=offset)
        offset += nbytes
        sections.append(
            Section(tag=tag_bytes.rstrip(b"\x00").decode("ascii"), dtype=dtype, data=data.reshape(rows, dim).copy())
        )
    return sections


def find_section(sections, tag: str) -> Section | None:
    for s in sections:
        if s.tag == tag:
            return s
    return None


# --- adapter snapshot -------------------------------------------------------

_ADAPTER_META_LEN = 8


def section_from_adapter(store: AdapterStore) -> Section:
    keys, values, steps, meta = store.snapshot_arrays()
    n, d = keys.shape
    width = max(2 * d + 1, _ADAPTER_META_LEN)
    rows = np.zeros((n + 1, width))
    rows[0, :7] = [1.0, meta["capacity"], meta["distance_threshold"], meta["mix_factor"],
                   meta["step_counter"], n, d]
    for i in range(n):
        rows[i + 1, :d] = keys[i]
        rows[i + 1, d : 2 * d] = values[i]
        rows[i + 1, 2 * d] = steps[i]
    return Section(tag="ADAPTER", dtype=DTYPE_DOUBLE, data=rows)


def adapter_from_section(section: Section) -> AdapterStore:
    rows = np.asarray(section.data, dtype=np.float64)
    meta_row = rows[0]
    n, d = int(meta_row[5]), int(meta_row[6])
    keys = rows[1 : n + 1, :d]
    values = rows[1 : n + 1, d : 2 * d]
    steps = rows[1 : n + 1, 2 * d].astype(np.int64)
    meta = {
        "capacity": int(meta_row[1]),
        "distance_threshold": float(meta_row[2]),
        "mix_factor": float(meta_row[3]),
        "step_counter": int(meta_row[4]),
    }
    return AdapterStore.from_snapshot(keys, values, steps, meta)


# --- toy encoder checkpoint -------------------------------------------------

# activation codes in the MODEL header row
_ACT_AFFINE = 0.0
_ACT_TANH = 1.0


def section_from_encoder(encoder) -> Section:
    from .toy import ToyImageEncoder  # local import to avoid a cycle

    assert isinstance(encoder, ToyImageEncoder)
    order = ["W", "b"] if encoder.hidden_dim is None else ["W1", "b1", "W2", "b2"]
    flat = np.concatenate([encoder.params[name].reshape(-1) for name in order])
    width = max(flat.size, 8)
    rows = np.zeros((2, width))
    activation = _ACT_AFFINE if encoder.hidden_dim is None else _ACT_TANH
    rows[0, :7] = [1.0, encoder.input_dim, encoder.hidden_dim or 0, encoder.embed_dim,
                   encoder.seed, flat.size, activation]
    rows[1, : flat.size] = flat
    return Section(tag="MODEL", dtype=DTYPE_DOUBLE, data=rows)


def encoder_from_section(section: Section):
    from .toy import ToyImageEncoder

    rows = np.asarray(section.data, dtype=np.float64)
    meta = rows[0]
    input_dim, hidden, embed_dim, seed, n_params = (
        int(meta[1]), int(meta[2]), int(meta[3]), int(meta[4]), int(meta[5]),
    )
    expected_act = _ACT_AFFINE if hidden == 0 else _ACT_TANH
    if meta[6] != expected_act:
        raise ValueError(f"unsupported activation code {meta[6]!r} for hidden={hidden}")
    encoder = ToyImageEncoder(input_dim, embed_dim, hidden or None, seed)
    flat = rows[1, :n_params]
    offset = 0
    order = ["W", "b"] if encoder.hidden_dim is None else ["W1", "b1", "W2", "b2"]
    for name in order:
        shape = encoder.params[name].shape
        size = encoder.params[name].size
        encoder.params[name] = flat[offset : offset + size].reshape(shape).copy()
        offset += size
    return encoder


# --- dataset sections -------------------------------------------------------

def sections_from_samples(samples) -> list[Section]:
    from .toy import feature_matrix, true_counts

    feats = feature_matrix(samples)
    counts = true_counts(samples).astype(np.float64)
    n_experts = len(samples[0].annotation.expert_labels)
    experts = np.zeros((len(samples), 2 + n_experts))
    for i, s in enumerate(samples):
        experts[i, 0] = i
        experts[i, 1] = s.annotation.gt
        experts[i, 2:] = s.annotation.expert_labels
    return [
        Section(tag="FEATS", dtype=DTYPE_DOUBLE, data=feats),
        Section(tag="COUNTS", dtype=DTYPE_DOUBLE, data=counts[:, None]),
        Section(tag="EXPERTS", dtype=DTYPE_DOUBLE, data=experts),
    ]


def samples_from_sections(sections) -> list:
    from .roughlabels import RoughAnnotation
    from .toy import CountSample

    feats = find_section(sections, "FEATS")
    counts = find_section(sections, "COUNTS")
    experts = find_section(sections, "EXPERTS")
    if feats is None or counts is None:
        raise ValueError("container lacks FEATS/COUNTS sections")
    out = []
    for i in range(feats.data.shape[0]):
        gt = int(round(float(counts.data[i, 0])))
        if experts is not None:
            row = experts.data[i]
            labels = tuple(int(round(float(x))) for x in row[2:])
        else:
            labels = (gt,)
        ann = RoughAnnotation(gt=gt, expert_labels=labels, lo=min(labels), hi=max(labels))
        out.append(CountSample(features=np.asarray(feats.data[i], dtype=np.float64), true_count=gt, annotation=ann))
    return out
