"""Symmetric image-text contrastive objective and its staged variant.

The batch objective averages an image-to-text and a text-to-image softmax
cross-entropy over cosine similarities divided by a temperature. The staged
variant applies the same objective once per place (hundreds, tens, units)
and sums the three terms, optionally weighted.

Gradients are analytic and exact for the unnormalized input embeddings,
including the chain through the cosine normalization. They are validated
against central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyBatch, StageCountMismatch
from .digits import StageId

# Softmax over similarity/temperature becomes numerically meaningless below this.
MIN_TEMPERATURE = 1e-4

STAGE_COUNT = 3


@dataclass(frozen=True)
class LossConfig:
    """Temperature and per-stage weights for the staged objective."""

    temperature: float = 0.07
    stage_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    # Optional extension: drop same-label pairs from softmax denominators.
    # Off by default; the literal objective treats duplicates as negatives.
    multi_positive_mask: bool = False

    def __post_init__(self):
        _check_temperature(self.temperature)
        if len(self.stage_weights) != STAGE_COUNT:
            raise StageCountMismatch(
                f"expected {STAGE_COUNT} stage weights, got {len(self.stage_weights)}"
            )
        if any(w < 0 for w in self.stage_weights):
            raise ValueError("stage weights must be nonnegative")


@dataclass
class LossOutput:
    """Loss value with gradients matching the input embedding shapes.

    grad_texts has shape (N, d) for the batch objective and (3, N, d) for
    the staged objective (one gradient block per stage).
    """

    value: float
    grad_images: np.ndarray
    grad_texts: np.ndarray


def _check_temperature(tau: float) -> float:
    tau = float(tau)
    if not np.isfinite(tau) or tau < MIN_TEMPERATURE:
        raise ValueError(f"temperature must be >= {MIN_TEMPERATURE}, got {tau}")
    return tau


def _as_batch(vs, name: str) -> np.ndarray:
    arr = np.asarray(vs, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name}: expected a batch of vectors, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise EmptyBatch(f"{name} is empty")
    return arr


def _paired_batches(images, texts) -> tuple[np.ndarray, np.ndarray]:
    v = _as_batch(images, "images")
    u = _as_batch(texts, "texts")
    if v.shape[0] != u.shape[0]:
        raise DimensionMismatch(f"batch sizes differ: {v.shape[0]} images vs {u.shape[0]} texts")
    if v.shape[1] != u.shape[1]:
        raise DimensionMismatch(f"embedding dims differ: {v.shape[1]} vs {u.shape[1]}")
    return v, u


def _normalized_rows(m: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms <= 1e-30):
        from .errors import ZeroVector

        raise ZeroVector(f"{name} contains a zero vector")
    return m / norms[:, None], norms


def _masked_logsumexp(logits: np.ndarray, allowed: np.ndarray, axis: int) -> np.ndarray:
    """log sum exp over allowed entries, with max subtraction along axis."""
    masked = np.where(allowed, logits, -np.inf)
    peak = masked.max(axis=axis, keepdims=True)
    out = peak + np.log(np.sum(np.exp(masked - peak), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def image_to_text_loss(i: int, images, texts, temperature: float = 0.07) -> float:
    """-log softmax of the matching pair among all texts, for query image i."""
    tau = _check_temperature(temperature)
    v, u = _paired_batches(images, texts)
    n = v.shape[0]
    if not 0 <= i < n:
        raise IndexError(f"index {i} outside batch of {n}")
    vh, _ = _normalized_rows(v, "images")
    uh, _ = _normalized_rows(u, "texts")
    logits = (uh @ vh[i]) / tau
    peak = logits.max()
    return float(np.log(np.sum(np.exp(logits - peak))) + peak - logits[i])


def text_to_image_loss(i: int, texts, images, temperature: float = 0.07) -> float:
    """Mirror of image_to_text_loss with query text i scored against images."""
    return image_to_text_loss(i, texts, images, temperature)


def _duplicate_groups(u: np.ndarray) -> np.ndarray:
    """Group id per row; identical rows share a group."""
    _, inverse = np.unique(u, axis=0, return_inverse=True)
    return inverse


def clip_loss(images, texts, temperature: float = 0.07, multi_positive_mask: bool = False) -> LossOutput:
    """Batch-symmetric contrastive loss with exact analytic gradients.

    value = (1/2N) sum_i [image-to-text loss_i + text-to-image loss_i].
    With multi_positive_mask, pairs whose text rows are bit-identical are
    excluded from each other's denominators (the matching pair stays).
    """
    tau = _check_temperature(temperature)
    v, u = _paired_batches(images, texts)
    n = v.shape[0]
    vh, vn = _normalized_rows(v, "images")
    uh, un = _normalized_rows(u, "texts")

    logits = (vh @ uh.T) / tau
    if multi_positive_mask:
        groups = _duplicate_groups(u)
        allowed = groups[:, None] != groups[None, :]
        np.fill_diagonal(allowed, True)
    else:
        allowed = np.ones((n, n), dtype=bool)

    diag = np.arange(n)
    lse_rows = _masked_logsumexp(logits, allowed, axis=1)
    lse_cols = _masked_logsumexp(logits, allowed, axis=0)
    value = float(np.sum((lse_rows - logits[diag, diag]) + (lse_cols - logits[diag, diag])) / (2 * n))

    # Row/column softmax restricted to allowed entries.
    a = np.where(allowed, np.exp(logits - lse_rows[:, None]), 0.0)
    b = np.where(allowed, np.exp(logits - lse_cols[None, :]), 0.0)
    g = (a + b) / (2 * n * tau)
    g[diag, diag] -= 2.0 / (2 * n * tau)

    # Chain through cosine: d s_ij / d v_i = (u_hat_j - s_ij v_hat_i) / |v_i|.
    dvh = g @ uh
    duh = g.T @ vh
    grad_v = (dvh - (np.sum(dvh * vh, axis=1, keepdims=True)) * vh) / vn[:, None]
    grad_u = (duh - (np.sum(duh * uh, axis=1, keepdims=True)) * uh) / un[:, None]
    return LossOutput(value=value, grad_images=grad_v, grad_texts=grad_u)


def pel_loss(images, stage_texts, cfg: LossConfig = LossConfig()) -> LossOutput:
    """Staged objective: weighted sum of the batch loss over the three places.

    stage_texts holds one text batch per stage, ordered hundreds, tens,
    units, each aligned with images. Image gradients sum across stages;
    text gradients are kept per stage, shape (3, N, d).
    """
    if len(stage_texts) != STAGE_COUNT:
        raise StageCountMismatch(f"expected {STAGE_COUNT} stage text batches, got {len(stage_texts)}")
    v = _as_batch(images, "images")
    n, d = v.shape
    value = 0.0
    grad_images = np.zeros_like(v)
    grad_texts = np.zeros((STAGE_COUNT, n, d))
    for k in StageId:
        u = _as_batch(stage_texts[k], f"stage_texts[{k.name}]")
        if u.shape[0] != n:
            raise StageCountMismatch(f"stage {k.name} has {u.shape[0]} texts for {n} images")
        w = cfg.stage_weights[k]
        if w == 0.0:
            continue
        part = clip_loss(v, u, cfg.temperature, cfg.multi_positive_mask)
        value += w * part.value
        grad_images += w * part.grad_images
        grad_texts[k] = w * part.grad_texts
    return LossOutput(value=float(value), grad_images=grad_images, grad_texts=grad_texts)
