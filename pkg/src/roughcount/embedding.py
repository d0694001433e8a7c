"""Vector normalization and cosine-similarity kernels.

Embeddings are plain 1-D float64 numpy arrays. Stored embeddings may be
unnormalized; every similarity here normalizes internally, so callers never
have to track normalization state. All accumulation is double precision to
keep downstream argmax decisions stable.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, EmptyBatch, ZeroVector

# Below this norm an embedding carries no usable direction.
ZERO_NORM_THRESHOLD = 1e-30


def as_vector(v) -> np.ndarray:
    """Coerce to a 1-D float64 array, rejecting non-finite values."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D vector, got shape {arr.shape}")
    if arr.size == 0:
        raise DimensionMismatch("expected a vector with at least one component")
    if not np.all(np.isfinite(arr)):
        raise ZeroVector("vector contains NaN or infinite components")
    return arr


def l2_normalize(v) -> np.ndarray:
    """Scale v to unit L2 norm, preserving direction.

    Raises ZeroVector when the norm is at or below ZERO_NORM_THRESHOLD,
    which signals degenerate encoder output rather than a numeric accident.
    """
    arr = as_vector(v)
    norm = float(np.linalg.norm(arr))
    if norm <= ZERO_NORM_THRESHOLD:
        raise ZeroVector(f"cannot normalize vector with norm {norm!r}")
    return arr / norm


def cosine_sim(a, b) -> float:
    """Cosine similarity a.b / (|a||b|). Symmetric; scale invariant."""
    va = as_vector(a)
    vb = as_vector(b)
    if va.shape != vb.shape:
        raise DimensionMismatch(f"dim {va.shape[0]} vs {vb.shape[0]}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na <= ZERO_NORM_THRESHOLD or nb <= ZERO_NORM_THRESHOLD:
        raise ZeroVector("cosine similarity undefined for zero vectors")
    return float(np.dot(va, vb) / (na * nb))


def batch_similarity(queries, candidates) -> np.ndarray:
    """Cosine similarity matrix: entry [i, j] = cosine_sim(queries[i], candidates[j]).

    Both arguments are sequences of equal-dimension vectors (or 2-D arrays).
    """
    q = _as_matrix(queries, "queries")
    c = _as_matrix(candidates, "candidates")
    if q.shape[1] != c.shape[1]:
        raise DimensionMismatch(f"query dim {q.shape[1]} vs candidate dim {c.shape[1]}")
    qn = np.linalg.norm(q, axis=1)
    cn = np.linalg.norm(c, axis=1)
    if np.any(qn <= ZERO_NORM_THRESHOLD) or np.any(cn <= ZERO_NORM_THRESHOLD):
        raise ZeroVector("batch_similarity received a zero vector")
    return (q / qn[:, None]) @ (c / cn[:, None]).T


def _as_matrix(vs, name: str) -> np.ndarray:
    arr = np.asarray(vs, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name}: expected vectors of uniform dimension")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise EmptyBatch(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ZeroVector(f"{name} contains NaN or infinite components")
    return arr
