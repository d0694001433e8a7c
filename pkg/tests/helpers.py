"""Shared test providers and reference models."""

import math

import numpy as np

from roughcount.decoder import DEFAULT_TEMPLATE


class MetricSimilarityProvider:
    """Provider whose cosine against the fixed query (1, 0) is a strictly
    decreasing function of |label - center|.

    embed(label) = (f, sqrt(1 - f^2)) with f = -|label - center| / 1000, so
    labels equidistant from the center produce bit-identical embeddings and
    the decoder's tie rule is exercised exactly. Rows come from one shared
    distance-indexed table, which also makes ties bit-exact.
    """

    query = np.array([1.0, 0.0])

    _f = -np.arange(1000, dtype=np.float64) / 1000.0
    _table = np.stack([_f, np.sqrt(1.0 - _f * _f)], axis=1)

    def __init__(self, center: int, template: str = DEFAULT_TEMPLATE):
        self.center = center
        self.template = template

    def embed_label(self, label: int) -> np.ndarray:
        return self._table[abs(label - self.center)]

    def embed_labels(self, labels) -> np.ndarray:
        idx = np.abs(np.asarray(labels, dtype=np.int64) - self.center)
        return self._table[idx]


class ReferenceStalenessStore:
    """List-based mirror of the adapter update rules, kept deliberately dumb."""

    def __init__(self, capacity, delta, lam):
        self.capacity, self.delta, self.lam = capacity, delta, lam
        self.keys = []
        self.values = []
        self.steps = []
        self.counter = 0

    @staticmethod
    def _norm(v):
        return v / np.linalg.norm(v)

    def update(self, v, u):
        vh = self._norm(np.asarray(v, dtype=np.float64))
        uh = self._norm(np.asarray(u, dtype=np.float64))
        kind = None
        if self.keys:
            sims = [float(np.dot(k, vh) / np.linalg.norm(k)) for k in self.keys]
            best = max(range(len(sims)), key=lambda j: (sims[j], -j))
            if float(np.linalg.norm(self.values[best] - uh)) < self.delta:
                self.keys[best] = self._norm(self.keys[best] + vh)
                self.steps[best] = self.counter
                kind = "merged"
        if kind is None:
            if len(self.keys) < self.capacity:
                self.keys.append(vh)
                self.values.append(self.lam * vh + (1 - self.lam) * uh)
                self.steps.append(self.counter)
                kind = "inserted"
            else:
                victim = min(range(len(self.steps)), key=lambda j: (self.steps[j], j))
                self.keys[victim] = vh
                self.values[victim] = self.lam * vh + (1 - self.lam) * uh
                self.steps[victim] = self.counter
                kind = "evicted"
        self.counter += 1
        return kind
