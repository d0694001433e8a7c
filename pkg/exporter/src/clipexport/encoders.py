"""Checkpoint registry: real vision-language checkpoints and an offline stand-in.

`resolve_encoder` maps a checkpoint identifier to an encoder exposing
`dim`, `encode_images(list[PIL.Image]) -> (n, dim)` and
`encode_texts(list[str]) -> (n, dim)`; rows come back L2-normalized.

Identifiers of the form `hash-proj-<dim>` select a deterministic seeded
random-projection encoder that needs no downloads: images are reduced to a
fixed grayscale grid and projected; texts are hashed to a byte histogram
and projected. It is not a semantic model, just a reproducible fixture for
pipelines and tests. Any other identifier is treated as a Hugging Face
CLIP checkpoint name (e.g. openai/clip-vit-base-patch16) and loaded
through transformers.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np


class CheckpointLoadFailure(Exception):
    pass


_GRID = 32  # hash encoder image grid, grayscale


class HashProjEncoder:
    """Deterministic offline encoder; same input bytes, same embedding."""

    def __init__(self, dim: int = 512, seed: int = 0):
        self.dim = dim
        rng = np.random.default_rng(seed)
        self._img_proj = rng.normal(size=(dim, _GRID * _GRID + 2)) / np.sqrt(_GRID * _GRID + 2)
        self._txt_proj = rng.normal(size=(dim, 258)) / np.sqrt(258)

    def encode_images(self, images) -> np.ndarray:
        from PIL import Image

        rows = np.empty((len(images), self.dim))
        for i, image in enumerate(images):
            gray = image.convert("L").resize((_GRID, _GRID), Image.BILINEAR)
            pixels = np.asarray(gray, dtype=np.float64).reshape(-1) / 255.0
            feats = np.concatenate([pixels, [pixels.mean(), pixels.std()]])
            rows[i] = self._img_proj @ feats
        return rows / np.linalg.norm(rows, axis=1, keepdims=True)

    def encode_texts(self, texts) -> np.ndarray:
        rows = np.empty((len(texts), self.dim))
        for i, text in enumerate(texts):
            data = text.encode("utf-8")
            hist = np.bincount(np.frombuffer(data, dtype=np.uint8), minlength=256).astype(np.float64)
            digest = hashlib.sha256(data).digest()
            feats = np.concatenate([hist / max(len(data), 1), [len(data) / 100.0, digest[0] / 255.0]])
            rows[i] = self._txt_proj @ feats
        return rows / np.linalg.norm(rows, axis=1, keepdims=True)


class HFClipEncoder:
    """Frozen CLIP checkpoint through transformers; eval mode, no gradients."""

    def __init__(self, checkpoint: str):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise CheckpointLoadFailure(f"transformers/torch unavailable: {exc}") from exc
        try:
            self._model = CLIPModel.from_pretrained(checkpoint)
            self._processor = CLIPProcessor.from_pretrained(checkpoint)
        except Exception as exc:
            raise CheckpointLoadFailure(f"cannot load checkpoint {checkpoint!r}: {exc}") from exc
        self._model.eval()
        self._torch = torch
        self.dim = int(self._model.config.projection_dim)

    def encode_images(self, images) -> np.ndarray:
        inputs = self._processor(images=images, return_tensors="pt")
        with self._torch.no_grad():
            feats = self._model.get_image_features(**inputs)
        rows = feats.double().numpy()
        return rows / np.linalg.norm(rows, axis=1, keepdims=True)

    def encode_texts(self, texts) -> np.ndarray:
        inputs = self._processor(text=list(texts), return_tensors="pt", padding=True)
        with self._torch.no_grad():
            feats = self._model.get_text_features(**inputs)
        rows = feats.double().numpy()
        return rows / np.linalg.norm(rows, axis=1, keepdims=True)


_HASH_ID = re.compile(r"^hash-proj-(\d+)$")


def resolve_encoder(checkpoint: str):
    match = _HASH_ID.match(checkpoint)
    if match:
        return HashProjEncoder(dim=int(match.group(1)))
    return HFClipEncoder(checkpoint)
