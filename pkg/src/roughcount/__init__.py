"""Coarse-to-fine count estimation from embedding similarity.

Core pieces: cosine kernels, the place-label codec, staged and flat
decoders, the symmetric contrastive objective with analytic gradients, a
key-value matching adapter, rough-label simulation, a desk-scale training
pipeline, counting metrics, and a binary exchange container with a CLI on
top.
"""

__version__ = "0.1.0"

from . import adapter, decoder, digits, embedding, errors, exchange, losses, metrics, roughlabels, toy

__all__ = [
    "__version__",
    "adapter",
    "decoder",
    "digits",
    "embedding",
    "errors",
    "exchange",
    "losses",
    "metrics",
    "roughlabels",
    "toy",
]
