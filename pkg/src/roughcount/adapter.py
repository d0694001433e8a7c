"""Bounded key-value memory that refines visual embeddings before matching.

The store holds up to `capacity` pairs of a visual key and a mixed
visual-text value. A query returns the value whose key is most cosine
similar. An update first queries, then compares the retrieved value to the
text embedding by raw Euclidean distance: a close match means the value
already represents this kind of input and only the key is folded toward
the query (normalized sum); a distant one writes a fresh pair into the
first free slot, or evicts the slot whose last write is oldest.

Queries never refresh staleness; only writes stamp the write step. The
distance threshold assumes unit-scale embeddings, so update() normalizes
both inputs on entry. Values are stored exactly as mixed and never touched
by merges.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .embedding import as_vector, l2_normalize
from .errors import DimensionMismatch, EmptyStore

DEFAULT_CAPACITY = 3000
DEFAULT_DISTANCE_THRESHOLD = 0.14
DEFAULT_MIX_FACTOR = 0.1


class UpdateKind(enum.Enum):
    MERGED = "merged"
    INSERTED = "inserted"
    EVICTED = "evicted"


@dataclass(frozen=True)
class AdapterConfig:
    capacity: int = DEFAULT_CAPACITY
    distance_threshold: float = DEFAULT_DISTANCE_THRESHOLD
    mix_factor: float = DEFAULT_MIX_FACTOR

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError(f"capacity must be positive, got {self.capacity}")
        if self.distance_threshold <= 0:
            raise ValueError("distance threshold must be positive")
        if not 0.0 <= self.mix_factor <= 1.0:
            raise ValueError("mix factor must lie in [0, 1]")


@dataclass(frozen=True)
class AdapterEntry:
    key: np.ndarray
    value: np.ndarray
    last_write_step: int


class AdapterStore:
    """Single-writer store; concurrent read-only queries are safe between writes."""

    def __init__(self, config: AdapterConfig = AdapterConfig()):
        self.config = config
        self.step_counter = 0
        self._dim: int | None = None
        self._keys: np.ndarray | None = None      # (capacity, dim), rows [0, size)
        self._values: np.ndarray | None = None
        self._steps: np.ndarray | None = None     # int64 write stamps
        self._size = 0

    def __len__(self) -> int:
        return self._size

    @property
    def dim(self) -> int | None:
        return self._dim

    def entries(self) -> list[AdapterEntry]:
        return [
            AdapterEntry(self._keys[i].copy(), self._values[i].copy(), int(self._steps[i]))
            for i in range(self._size)
        ]

    def _ensure_dim(self, v: np.ndarray):
        if self._dim is None:
            self._dim = v.shape[0]
            cap = self.config.capacity
            self._keys = np.empty((cap, self._dim))
            self._values = np.empty((cap, self._dim))
            self._steps = np.empty(cap, dtype=np.int64)
        elif v.shape[0] != self._dim:
            raise DimensionMismatch(f"store dim {self._dim}, got vector of dim {v.shape[0]}")

    def query(self, v) -> tuple[int, np.ndarray]:
        """Most-similar slot by cosine against the keys; ties take the lowest index."""
        if self._size == 0:
            raise EmptyStore("query on empty adapter store")
        vh = l2_normalize(as_vector(v))
        self._ensure_dim(vh)
        keys = self._keys[: self._size]
        sims = keys @ vh / np.linalg.norm(keys, axis=1)
        idx = int(np.argmax(sims))
        return idx, self._values[idx].copy()

    def update(self, v, u) -> UpdateKind:
        """Fold v into the store, gated by the value-to-text distance.

        Exactly one write per call; the step counter advances exactly once.
        """
        vh = l2_normalize(as_vector(v))
        uh = l2_normalize(as_vector(u))
        if vh.shape != uh.shape:
            raise DimensionMismatch(f"dim {vh.shape[0]} vs {uh.shape[0]}")
        self._ensure_dim(vh)

        kind = None
        if self._size > 0:
            idx, value = self.query(vh)
            distance = float(np.linalg.norm(value - uh))
            if distance < self.config.distance_threshold:
                # Close match: realign only the key toward this input.
                self._keys[idx] = l2_normalize(self._keys[idx] + vh)
                self._steps[idx] = self.step_counter
                kind = UpdateKind.MERGED
        if kind is None:
            lam = self.config.mix_factor
            if self._size < self.config.capacity:
                slot = self._size
                self._size += 1
                kind = UpdateKind.INSERTED
            else:
                slot = int(np.argmin(self._steps[: self._size]))
                kind = UpdateKind.EVICTED
            self._keys[slot] = vh
            self._values[slot] = lam * vh + (1.0 - lam) * uh
            self._steps[slot] = self.step_counter
        self.step_counter += 1
        return kind

    def refine(self, v) -> np.ndarray:
        """Average v with its queried value; identity when the store is empty."""
        arr = as_vector(v)
        if self._size == 0:
            return arr.copy()
        _, value = self.query(arr)
        return 0.5 * (arr + value)

    def stalest(self) -> int:
        """Slot whose last write is oldest; ties take the lowest index."""
        if self._size == 0:
            raise EmptyStore("stalest on empty adapter store")
        return int(np.argmin(self._steps[: self._size]))

    # snapshot interface used by the exchange container

    def snapshot_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict]:
        meta = {
            "capacity": self.config.capacity,
            "distance_threshold": self.config.distance_threshold,
            "mix_factor": self.config.mix_factor,
            "step_counter": self.step_counter,
        }
        k = self._keys[: self._size].copy() if self._size else np.empty((0, self._dim or 0))
        vals = self._values[: self._size].copy() if self._size else np.empty((0, self._dim or 0))
        steps = self._steps[: self._size].copy() if self._size else np.empty(0, dtype=np.int64)
        return k, vals, steps, meta

    @classmethod
    def from_snapshot(cls, keys: np.ndarray, values: np.ndarray, steps: np.ndarray, meta: dict) -> "AdapterStore":
        cfg = AdapterConfig(
            capacity=int(meta["capacity"]),
            distance_threshold=float(meta["distance_threshold"]),
            mix_factor=float(meta["mix_factor"]),
        )
        store = cls(cfg)
        n = keys.shape[0]
        if n > cfg.capacity:
            raise ValueError(f"snapshot holds {n} entries for capacity {cfg.capacity}")
        if n:
            store._ensure_dim(np.asarray(keys[0], dtype=np.float64))
            store._keys[:n] = keys
            store._values[:n] = values
            store._steps[:n] = steps
            store._size = n
        store.step_counter = int(meta["step_counter"])
        return store
