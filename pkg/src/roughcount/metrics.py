"""Counting metrics and density-interval breakdowns.

Following crowd-counting convention, "MSE" here is the square root of the
mean squared error, which is why paired results always satisfy mae <= mse.
The raw (unrooted) mean square is reported alongside to avoid ambiguity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import Empty, LengthMismatch, OverlappingBands

# Density intervals for the per-band breakdown; last band is open-ended.
DEFAULT_BANDS: tuple[tuple[float, float | None], ...] = (
    (0, 100),
    (100, 200),
    (200, 300),
    (300, 500),
    (500, 800),
    (800, None),
)


@dataclass
class IntervalMetrics:
    band: tuple[float, float | None]
    n: int
    mae: float | None
    mse: float | None
    raw_mse: float | None


@dataclass
class EvalReport:
    mae: float
    mse: float
    raw_mse: float
    per_interval: list[IntervalMetrics] = field(default_factory=list)
    decodes_per_sec: float | None = None
    similarity_evals_per_sample: float | None = None

    def to_dict(self) -> dict:
        return {
            "mae": self.mae,
            "mse": self.mse,
            "raw_mse": self.raw_mse,
            "decodes_per_sec": self.decodes_per_sec,
            "similarity_evals_per_sample": self.similarity_evals_per_sample,
            "per_interval": [
                {
                    "band": [b.band[0], b.band[1]],
                    "n": b.n,
                    "mae": b.mae,
                    "mse": b.mse,
                    "raw_mse": b.raw_mse,
                }
                for b in self.per_interval
            ],
        }


def _paired(preds, gts) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=np.float64).reshape(-1)
    g = np.asarray(gts, dtype=np.float64).reshape(-1)
    if p.size != g.size:
        raise LengthMismatch(f"{p.size} predictions vs {g.size} ground truths")
    if p.size == 0:
        raise Empty("metrics need at least one sample")
    return p, g


def mae(preds, gts) -> float:
    """Mean absolute error."""
    p, g = _paired(preds, gts)
    return float(np.mean(np.abs(p - g)))


def mse(preds, gts) -> float:
    """Root of the mean squared error (crowd-counting convention)."""
    p, g = _paired(preds, gts)
    return float(np.sqrt(np.mean((p - g) ** 2)))


def raw_mse(preds, gts) -> float:
    """Unrooted mean squared error."""
    p, g = _paired(preds, gts)
    return float(np.mean((p - g) ** 2))


def validate_bands(bands) -> tuple[tuple[float, float | None], ...]:
    """Bands must partition [0, inf): start at 0, be contiguous, end open."""
    bands = tuple((float(lo), None if hi is None else float(hi)) for lo, hi in bands)
    if not bands:
        raise OverlappingBands("need at least one band")
    if bands[0][0] != 0:
        raise OverlappingBands(f"first band must start at 0, got {bands[0][0]}")
    for (lo, hi), (nlo, _) in zip(bands, bands[1:]):
        if hi is None:
            raise OverlappingBands("only the last band may be open-ended")
        if hi <= lo:
            raise OverlappingBands(f"band [{lo}, {hi}) is empty or inverted")
        if nlo != hi:
            raise OverlappingBands(f"bands [{lo}, {hi}) and [{nlo}, ...) do not meet")
    if bands[-1][1] is not None:
        raise OverlappingBands("last band must be open-ended")
    return bands


def interval_breakdown(preds, gts, bands=DEFAULT_BANDS) -> list[IntervalMetrics]:
    """Per-band metrics, assigning samples by their ground-truth count."""
    bands = validate_bands(bands)
    p, g = _paired(preds, gts)
    out: list[IntervalMetrics] = []
    for lo, hi in bands:
        mask = (g >= lo) if hi is None else (g >= lo) & (g < hi)
        n = int(mask.sum())
        if n == 0:
            out.append(IntervalMetrics(band=(lo, hi), n=0, mae=None, mse=None, raw_mse=None))
        else:
            out.append(
                IntervalMetrics(
                    band=(lo, hi),
                    n=n,
                    mae=mae(p[mask], g[mask]),
                    mse=mse(p[mask], g[mask]),
                    raw_mse=raw_mse(p[mask], g[mask]),
                )
            )
    return out


def efficiency_stats(traces, total_seconds: float) -> tuple[float, float]:
    """(mean similarity evaluations per decode, decodes per second)."""
    if not traces:
        raise Empty("efficiency stats need at least one trace")
    mean_evals = float(np.mean([t.similarity_evaluations for t in traces]))
    rate = len(traces) / total_seconds if total_seconds > 0 else float("inf")
    return mean_evals, rate


def build_report(preds, gts, bands=DEFAULT_BANDS, traces=None, total_seconds=None) -> EvalReport:
    """Assemble the full report; efficiency fields appear when traces are given."""
    report = EvalReport(
        mae=mae(preds, gts),
        mse=mse(preds, gts),
        raw_mse=raw_mse(preds, gts),
        per_interval=interval_breakdown(preds, gts, bands),
    )
    if traces is not None and total_seconds is not None:
        evals, rate = efficiency_stats(traces, total_seconds)
        report.similarity_evals_per_sample = evals
        report.decodes_per_sec = rate
    return report
