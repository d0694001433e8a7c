"""Staged and flat count decoding by cosine argmax over prompt embeddings.

Staged decoding fixes one digit at a time, coarse to fine. Each stage
matches the query embedding against the ten candidate labels of that place
(conditioned on the digits already chosen) and keeps the argmax, so a full
decode costs exactly 30 similarity evaluations regardless of the counting
range. Flat decoding matches against every count in the range instead.

Ties break toward the larger label: band midpoints are equidistant from
band boundaries, and breaking high resolves a boundary count into the
correct containing band.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from . import digits
from .digits import StageId
from .embedding import as_vector, l2_normalize
from .errors import ProviderFailure, ZeroVector

DEFAULT_TEMPLATE = "The number of people in the photo is approximately {number}"

PROGRESSIVE_EVALUATIONS = 30


@runtime_checkable
class TextEmbeddingProvider(Protocol):
    """Deterministic mapping from an integer label to its prompt embedding."""

    template: str

    def embed_label(self, label: int) -> np.ndarray: ...


class PromptCache:
    """Per-label embedding cache plus stacked candidate matrices.

    Keyed by (template, label) so providers with different templates never
    collide. Safe for concurrent reads with single-writer insertion; a lock
    serializes inserts.
    """

    def __init__(self, provider: TextEmbeddingProvider):
        self.provider = provider
        self._rows: dict[tuple[str, int], np.ndarray] = {}
        self._matrices: dict[tuple, np.ndarray] = {}
        self._lock = threading.Lock()

    def row(self, label: int) -> np.ndarray:
        """Unit-normalized embedding for one label."""
        key = (self.provider.template, int(label))
        row = self._rows.get(key)
        if row is None:
            try:
                raw = self.provider.embed_label(int(label))
            except Exception as exc:
                raise ProviderFailure(f"provider failed for label {label}: {exc}") from exc
            row = l2_normalize(as_vector(raw))
            row.setflags(write=False)
            with self._lock:
                self._rows.setdefault(key, row)
        return row

    def candidate_matrix(self, labels: tuple[int, ...], tag) -> np.ndarray:
        """Stacked normalized rows for a fixed candidate label tuple.

        tag must identify the label tuple uniquely; it is the cache key.
        Providers may expose embed_labels(labels) -> matrix for bulk
        embedding; otherwise rows are fetched one by one.
        """
        key = (self.provider.template, tag)
        mat = self._matrices.get(key)
        if mat is None:
            bulk = getattr(self.provider, "embed_labels", None)
            if bulk is not None:
                try:
                    raw = np.asarray(bulk(labels), dtype=np.float64)
                except Exception as exc:
                    raise ProviderFailure(f"provider failed for labels {labels[:3]}...: {exc}") from exc
                norms = np.linalg.norm(raw, axis=1)
                if raw.shape[0] != len(labels) or np.any(norms <= 1e-30) or not np.all(np.isfinite(raw)):
                    raise ProviderFailure("bulk provider returned malformed embeddings")
                mat = raw / norms[:, None]
            else:
                mat = np.stack([self.row(l) for l in labels])
            mat.setflags(write=False)
            with self._lock:
                self._matrices.setdefault(key, mat)
        return mat


@dataclass
class DecodeTrace:
    """One decode: per-stage digits and labels, evaluation count, result."""

    mode: str
    final: int
    similarity_evaluations: int
    stage_digits: tuple[int, int, int] | None = None
    matched_labels: tuple[int, int, int] | None = None


@dataclass
class DecodeBatchResult:
    traces: list[DecodeTrace]
    total_seconds: float
    decodes_per_sec: float


def argmax_tie_larger(sims: np.ndarray) -> int:
    """Index of the maximum; on exact ties, the largest index wins."""
    return len(sims) - 1 - int(np.argmax(sims[::-1]))


def _progressive_from_unit(vh: np.ndarray, cache: PromptCache) -> DecodeTrace:
    """Core staged decode; vh must already be unit length."""
    h = t = None
    d0 = d1 = d2 = 0
    labels_out = []
    for stage in StageId:
        cand = digits.stage_candidates(stage, h, t)
        mat = cache.candidate_matrix(cand.labels, (stage, h, t))
        sims = mat @ vh
        idx = argmax_tie_larger(sims)
        labels_out.append(cand.labels[idx])
        if stage == StageId.HUNDREDS:
            h = d0 = idx
        elif stage == StageId.TENS:
            t = d1 = idx
        else:
            d2 = idx
    return DecodeTrace(
        mode="progressive",
        final=100 * d0 + 10 * d1 + d2,
        similarity_evaluations=PROGRESSIVE_EVALUATIONS,
        stage_digits=(d0, d1, d2),
        matched_labels=tuple(labels_out),
    )


def _flat_from_unit(vh: np.ndarray, range_max: int, cache: PromptCache) -> DecodeTrace:
    mat = cache.candidate_matrix(tuple(range(range_max)), ("flat", range_max))
    idx = argmax_tie_larger(mat @ vh)
    return DecodeTrace(mode="flat", final=idx, similarity_evaluations=range_max)


def decode_progressive(v, provider: TextEmbeddingProvider, cache: PromptCache | None = None) -> DecodeTrace:
    """Three staged ten-way matches; exactly 30 similarity evaluations."""
    if cache is None:
        cache = PromptCache(provider)
    return _progressive_from_unit(l2_normalize(as_vector(v)), cache)


def decode_flat(v, provider: TextEmbeddingProvider, range_max: int = 1000, cache: PromptCache | None = None) -> tuple[int, int]:
    """Argmax over labels 0..range_max-1; returns (count, evaluations)."""
    if range_max < 1:
        raise ValueError(f"range_max must be >= 1, got {range_max}")
    if cache is None:
        cache = PromptCache(provider)
    trace = _flat_from_unit(l2_normalize(as_vector(v)), range_max, cache)
    return trace.final, trace.similarity_evaluations


def decode_batch(
    vs,
    provider: TextEmbeddingProvider,
    mode: str = "progressive",
    range_max: int = 1000,
    cache: PromptCache | None = None,
) -> DecodeBatchResult:
    """Decode a batch of embeddings, reusing prompt embeddings across samples.

    Inputs are validated and normalized once for the whole batch, so the
    timed loop per sample is just candidate lookups, similarities, and the
    argmax. Wall-clock throughput covers the decode loop only.
    """
    vs = np.asarray(vs, dtype=np.float64)
    if vs.ndim == 1:
        vs = vs[None, :]
    if vs.shape[0] == 0:
        from .errors import EmptyBatch

        raise EmptyBatch("decode_batch needs at least one embedding")
    if mode not in ("progressive", "flat"):
        raise ValueError(f"unknown decode mode {mode!r}")
    if range_max < 1:
        raise ValueError(f"range_max must be >= 1, got {range_max}")
    if not np.all(np.isfinite(vs)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(vs), axis=1))[0])
        raise ZeroVector(f"sample {bad}: embedding contains NaN or infinite components")
    norms = np.linalg.norm(vs, axis=1)
    if np.any(norms <= 1e-30):
        bad = int(np.flatnonzero(norms <= 1e-30)[0])
        raise ZeroVector(f"sample {bad}: cannot normalize vector with norm {norms[bad]!r}")
    unit = vs / norms[:, None]

    if cache is None:
        cache = PromptCache(provider)
    traces: list[DecodeTrace] = []
    start = time.perf_counter()
    try:
        if mode == "progressive":
            for i in range(unit.shape[0]):
                traces.append(_progressive_from_unit(unit[i], cache))
        else:
            for i in range(unit.shape[0]):
                traces.append(_flat_from_unit(unit[i], range_max, cache))
    except ProviderFailure as exc:
        raise ProviderFailure(f"sample {len(traces)}: {exc}") from exc
    elapsed = time.perf_counter() - start
    rate = len(traces) / elapsed if elapsed > 0 else float("inf")
    return DecodeBatchResult(traces=traces, total_seconds=elapsed, decodes_per_sec=rate)
