"""Desk-scale substrate: synthetic count data, small encoders, PEL training.

The synthetic generator sums k seeded "object" vectors (k = the count) plus
Gaussian noise, so count information enters the features as accumulated
object mass. The text side is a frozen deterministic embedder that places
the 1000 count labels on a smooth curve: a global trend, a grid of local
Gaussian bumps, softly-edged hundreds-band indicators, and scaled digit
features, all pushed through a fixed seeded random projection and
normalized. Band indicators keep the ten hundreds anchors well separated
while the bump grid gives the local ordering the finer stages rely on.

Training teacher-forces the stage labels: every step re-samples a label
from each sample's expert band, encodes its place labels, and minimizes the
staged contrastive objective with gradients flowing only into the image
encoder (text embeddings are frozen by default).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .decoder import DEFAULT_TEMPLATE
from .digits import COUNT_MAX, encode_places
from .errors import BadRange, DimensionMismatch, NonFiniteLoss
from .losses import LossConfig, pel_loss
from .roughlabels import (
    RoughAnnotation,
    RoughLabelSpec,
    derive_seed,
    sample_training_label,
    simulate_experts,
)

# Added to every encoder output so downstream normalization never sees an
# exactly-zero vector; the epsilon direction is the first embedding axis.
OUTPUT_GUARD = 1e-6


@dataclass
class CountSample:
    features: np.ndarray
    true_count: int
    annotation: RoughAnnotation


def gen_dataset(
    count_range: tuple[int, int],
    size: int,
    input_dim: int,
    noise_scale: float = 1.0,
    seed: int = 0,
    n_objects: int = 8,
    rough: RoughLabelSpec | None = None,
) -> list[CountSample]:
    """Synthetic samples whose features are a sum of k object vectors plus noise.

    The object pool (n_objects vectors around a common direction) is drawn
    once per dataset, so train/test splits of one dataset share a world.
    Counts are uniform over the closed count_range. Annotations use `rough`
    when given, else a zero-width band (exact labels).
    """
    lo, hi = int(count_range[0]), int(count_range[1])
    if not (0 <= lo <= hi <= COUNT_MAX):
        raise BadRange(f"count range [{lo}, {hi}] not inside [0, {COUNT_MAX}]")
    if size < 1:
        raise BadRange(f"dataset size must be positive, got {size}")
    if rough is None:
        rough = RoughLabelSpec(error_pct=0.0, experts=1, seed=derive_seed(seed, 101))

    rng = np.random.default_rng(seed)
    base = rng.normal(size=input_dim)
    base /= np.linalg.norm(base)
    pool = base[None, :] + 0.25 * rng.normal(size=(n_objects, input_dim)) / math.sqrt(input_dim)

    counts = rng.integers(lo, hi + 1, size=size)
    samples: list[CountSample] = []
    for i, k in enumerate(counts):
        k = int(k)
        if k > 0:
            picks = rng.integers(0, n_objects, size=k)
            weights = np.bincount(picks, minlength=n_objects).astype(np.float64)
            feats = weights @ pool
        else:
            feats = np.zeros(input_dim)
        feats = feats + noise_scale * rng.normal(size=input_dim)
        ann = simulate_experts(k, replace(rough, seed=derive_seed(rough.seed, i)))
        samples.append(CountSample(features=feats, true_count=k, annotation=ann))
    return samples


def re_annotate(samples: list[CountSample], rough: RoughLabelSpec) -> list[CountSample]:
    """Same features and counts, fresh expert bands (for error-range sweeps)."""
    return [
        CountSample(
            features=s.features,
            true_count=s.true_count,
            annotation=simulate_experts(s.true_count, replace(rough, seed=derive_seed(rough.seed, i))),
        )
        for i, s in enumerate(samples)
    ]


def feature_matrix(samples: list[CountSample]) -> np.ndarray:
    return np.stack([s.features for s in samples])


def true_counts(samples: list[CountSample]) -> np.ndarray:
    return np.array([s.true_count for s in samples], dtype=np.int64)


class NumericTextEmbedder:
    """Frozen deterministic label embedder, injective over [0, 999].

    Feature blocks for label c with x = c/1000 and digits (h, t, u):
      global trend   w_global * (x, sin(pi x), cos(pi x))
      local bumps    exp(-((c - grid)^2) / (2 ell^2)), grid step `spacing`
      band plateaus  w_band * sigmoid-edged indicator per hundreds band
      digit scalars  w_digit * (h, t, u) / 9
    projected by a fixed seeded Gaussian matrix and L2-normalized.
    """

    def __init__(
        self,
        dim: int = 64,
        seed: int = 7,
        template: str = DEFAULT_TEMPLATE,
        ell: float = 12.0,
        spacing: float = 6.0,
        band_softness: float = 8.0,
        w_global: float = 2.0,
        w_band: float = 1.8,
        w_digit: float = 0.5,
    ):
        self.dim = dim
        self.template = template
        self._centers = np.arange(0.0, 1000.0 + 1e-9, spacing)
        self._ell = ell
        self._soft = band_softness
        self._wg, self._wb, self._wd = w_global, w_band, w_digit
        feat_dim = 3 + len(self._centers) + 10 + 3
        rng = np.random.default_rng(seed)
        self._proj = rng.normal(size=(dim, feat_dim)) / math.sqrt(feat_dim)
        self._cache: dict[int, np.ndarray] = {}

    def _features(self, label: int) -> np.ndarray:
        x = label / 1000.0
        h, t, u = label // 100, (label // 10) % 10, label % 10
        trend = self._wg * np.array([x, math.sin(math.pi * x), math.cos(math.pi * x)])
        bumps = np.exp(-0.5 * ((label - self._centers) / self._ell) ** 2)
        edges = np.arange(11) * 100.0
        sig = 1.0 / (1.0 + np.exp(-(label - edges) / self._soft))
        bands = self._wb * (sig[:-1] - sig[1:])
        scalars = self._wd * np.array([h / 9.0, t / 9.0, u / 9.0])
        return np.concatenate([trend, bumps, bands, scalars])

    def embed_label(self, label: int) -> np.ndarray:
        label = int(label)
        e = self._cache.get(label)
        if e is None:
            raw = self._proj @ self._features(label)
            e = raw / np.linalg.norm(raw)
            e.setflags(write=False)
            self._cache[label] = e
        return e


class TrainableTextOverlay:
    """Provider wrapper holding per-label adjustments learned during training.

    Only used when the trainer is configured with text gradients enabled;
    the base embedder itself stays frozen.
    """

    def __init__(self, base):
        self.base = base
        self.template = base.template
        self.rows: dict[int, np.ndarray] = {}

    def embed_label(self, label: int) -> np.ndarray:
        label = int(label)
        row = self.rows.get(label)
        return row if row is not None else self.base.embed_label(label)

    def apply_gradient(self, label: int, grad: np.ndarray, lr: float):
        label = int(label)
        current = self.rows.get(label)
        if current is None:
            current = self.base.embed_label(label).copy()
        self.rows[label] = current - lr * grad


class ToyImageEncoder:
    """Affine map or 2-layer tanh perceptron from features to embeddings."""

    def __init__(self, input_dim: int, embed_dim: int, hidden_dim: int | None = None, seed: int = 0):
        self.input_dim = input_dim
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.seed = seed
        rng = np.random.default_rng(seed)
        if hidden_dim is None:
            self.params = {
                "W": rng.normal(size=(embed_dim, input_dim)) / math.sqrt(input_dim),
                "b": np.zeros(embed_dim),
            }
        else:
            self.params = {
                "W1": rng.normal(size=(hidden_dim, input_dim)) / math.sqrt(input_dim),
                "b1": np.zeros(hidden_dim),
                "W2": rng.normal(size=(embed_dim, hidden_dim)) / math.sqrt(hidden_dim),
                "b2": np.zeros(embed_dim),
            }
        self._cache = None
        self._guard = np.zeros(embed_dim)
        self._guard[0] = OUTPUT_GUARD

    def calibrate_input(self, features: np.ndarray):
        """Fold per-feature standardization of `features` into the first layer."""
        mean = features.mean(axis=0)
        std = features.std(axis=0) + 1e-8
        w_name = "W" if self.hidden_dim is None else "W1"
        b_name = "b" if self.hidden_dim is None else "b1"
        self.params[w_name] = self.params[w_name] / std[None, :]
        self.params[b_name] = self.params[b_name] - self.params[w_name] @ mean

    def forward(self, features: np.ndarray) -> np.ndarray:
        """Embed one vector or a batch; caches activations for backward()."""
        x = np.asarray(features, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.input_dim:
            raise DimensionMismatch(f"encoder expects dim {self.input_dim}, got {x.shape[1]}")
        if self.hidden_dim is None:
            v = x @ self.params["W"].T + self.params["b"]
            self._cache = (x, None)
        else:
            z = x @ self.params["W1"].T + self.params["b1"]
            hact = np.tanh(z)
            v = hact @ self.params["W2"].T + self.params["b2"]
            self._cache = (x, hact)
        v = v + self._guard
        return v[0] if single else v

    def backward(self, grad_v: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients for the most recent forward()."""
        if self._cache is None:
            raise RuntimeError("backward() without a preceding forward()")
        g = np.asarray(grad_v, dtype=np.float64)
        if g.ndim == 1:
            g = g[None, :]
        x, hact = self._cache
        if self.hidden_dim is None:
            return {"W": g.T @ x, "b": g.sum(axis=0)}
        dh = g @ self.params["W2"]
        dz = dh * (1.0 - hact**2)
        return {
            "W2": g.T @ hact,
            "b2": g.sum(axis=0),
            "W1": dz.T @ x,
            "b1": dz.sum(axis=0),
        }

    def copy(self) -> "ToyImageEncoder":
        clone = ToyImageEncoder(self.input_dim, self.embed_dim, self.hidden_dim, self.seed)
        clone.params = {k: v.copy() for k, v in self.params.items()}
        return clone


def forward(encoder: ToyImageEncoder, features) -> np.ndarray:
    """Encode features; guards guarantee a non-degenerate output."""
    out = encoder.forward(features)
    if not np.all(np.isfinite(out)):
        raise NonFiniteLoss("encoder produced non-finite embeddings")
    return out


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    learning_rate: float = 1e-3
    epochs: int = 10
    optimizer: str = "adam"          # "adam" or "sgd"
    lr_schedule: str = "cosine"      # "cosine" or "constant"
    seed: int = 0
    text_frozen: bool = True

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("contrastive training needs batch_size >= 2")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.lr_schedule not in ("cosine", "constant"):
            raise ValueError(f"unknown lr schedule {self.lr_schedule!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")


@dataclass
class TrainResult:
    encoder: ToyImageEncoder
    loss_curve: list[float]
    text_overlay: TrainableTextOverlay | None = None


class _Adam:
    def __init__(self, params: dict[str, np.ndarray]):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.t += 1
        for name, g in grads.items():
            self.m[name] = beta1 * self.m[name] + (1 - beta1) * g
            self.v[name] = beta2 * self.v[name] + (1 - beta2) * g * g
            mhat = self.m[name] / (1 - beta1**self.t)
            vhat = self.v[name] / (1 - beta2**self.t)
            params[name] -= lr * mhat / (np.sqrt(vhat) + eps)


class _SGD:
    def step(self, params, grads, lr):
        for name, g in grads.items():
            params[name] -= lr * g


def train(
    dataset: list[CountSample],
    encoder: ToyImageEncoder,
    text_embedder,
    train_cfg: TrainConfig = TrainConfig(),
    loss_cfg: LossConfig = LossConfig(),
) -> TrainResult:
    """Teacher-forced staged contrastive training of the image encoder.

    Per step: re-sample a training label inside each sample's expert band,
    encode its place labels, embed the three stage prompts, and descend the
    staged loss. Fully deterministic given the config seeds. Records the
    mean loss per epoch.
    """
    if not dataset:
        raise BadRange("training needs a nonempty dataset")
    n = len(dataset)
    batch = min(train_cfg.batch_size, n)
    if batch < 2:
        raise ValueError("contrastive training needs at least 2 samples per batch")

    features = feature_matrix(dataset)
    overlay = None if train_cfg.text_frozen else TrainableTextOverlay(text_embedder)
    provider = text_embedder if overlay is None else overlay

    perm_rng = np.random.default_rng(derive_seed(train_cfg.seed, 1))
    opt = _Adam(encoder.params) if train_cfg.optimizer == "adam" else _SGD()
    dim = encoder.embed_dim
    curve: list[float] = []
    global_step = 0
    for epoch in range(train_cfg.epochs):
        if train_cfg.lr_schedule == "cosine":
            lr = train_cfg.learning_rate * 0.5 * (1.0 + math.cos(math.pi * epoch / train_cfg.epochs))
        else:
            lr = train_cfg.learning_rate
        order = perm_rng.permutation(n)
        step_losses = []
        for s in range(n // batch):
            idx = order[s * batch : (s + 1) * batch]
            stage_texts = np.empty((3, batch, dim))
            stage_rows = []  # (stage, position, label) for text-side updates
            for pos, j in enumerate(idx):
                ann = dataset[j].annotation
                label = sample_training_label(ann, derive_seed(derive_seed(train_cfg.seed, global_step), pos))
                places = encode_places(label)
                # Teacher forcing: every stage label derives from the sampled
                # rough label, never from a model prediction.
                assert places.units_label == label
                for stage, stage_label in enumerate(
                    (places.hundreds_label, places.tens_label, places.units_label)
                ):
                    stage_texts[stage, pos] = provider.embed_label(stage_label)
                    stage_rows.append((stage, pos, stage_label))
            v = encoder.forward(features[idx])
            out = pel_loss(v, stage_texts, loss_cfg)
            if not math.isfinite(out.value):
                raise NonFiniteLoss(
                    f"non-finite loss at epoch {epoch} step {s}: value={out.value!r}, "
                    f"max|grad|={np.max(np.abs(out.grad_images))!r}"
                )
            grads = encoder.backward(out.grad_images)
            opt.step(encoder.params, grads, lr)
            if overlay is not None:
                for stage, pos, stage_label in stage_rows:
                    overlay.apply_gradient(stage_label, out.grad_texts[stage, pos], lr)
            step_losses.append(out.value)
            global_step += 1
        curve.append(float(np.mean(step_losses)))
    return TrainResult(encoder=encoder, loss_curve=curve, text_overlay=overlay)


def finite_diff_check(
    encoder: ToyImageEncoder,
    features: np.ndarray,
    stage_texts: np.ndarray,
    loss_cfg: LossConfig = LossConfig(),
    step: float = 1e-6,
) -> float:
    """Worst relative error between analytic and central-difference gradients.

    Perturbs every encoder weight individually, so keep the encoder small.
    """
    if not 1e-8 <= step <= 1e-4:
        raise ValueError(f"step {step} outside [1e-8, 1e-4]")

    def loss_value() -> float:
        v = encoder.forward(features)
        return pel_loss(v, stage_texts, loss_cfg).value

    v = encoder.forward(features)
    out = pel_loss(v, stage_texts, loss_cfg)
    analytic = encoder.backward(out.grad_images)

    # Relative error in the l2 sense per parameter block; entrywise ratios on
    # near-zero entries would only measure finite-difference rounding noise.
    worst = 0.0
    for name, param in encoder.params.items():
        flat = param.reshape(-1)
        numeric = np.zeros(flat.size)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = loss_value()
            flat[i] = keep - step
            down = loss_value()
            flat[i] = keep
            numeric[i] = (up - down) / (2 * step)
        grad_flat = analytic[name].reshape(-1)
        # Absolute floor keeps zero-gradient batches from reporting pure
        # finite-difference noise as a large relative error.
        denom = max(float(np.linalg.norm(numeric)), float(np.linalg.norm(grad_flat)), 1e-6)
        worst = max(worst, float(np.linalg.norm(numeric - grad_flat)) / denom)
    return worst
