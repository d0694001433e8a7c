"""Embedding exporter: vision-language checkpoints to exchange containers."""

__version__ = "0.1.0"

from .container import Section, read_container, write_container
from .encoders import CheckpointLoadFailure, HashProjEncoder, resolve_encoder
from .export import (
    ExportJob,
    UnreadableImage,
    all_labels,
    export_image_embeddings,
    export_prompt_embeddings,
    hundreds_labels,
    trace_path_labels,
)

__all__ = [
    "__version__",
    "Section",
    "read_container",
    "write_container",
    "CheckpointLoadFailure",
    "HashProjEncoder",
    "resolve_encoder",
    "ExportJob",
    "UnreadableImage",
    "all_labels",
    "export_image_embeddings",
    "export_prompt_embeddings",
    "hundreds_labels",
    "trace_path_labels",
]
