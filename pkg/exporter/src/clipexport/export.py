"""Export jobs: image patches and numeric prompts to exchange containers.

Each export writes one container plus a JSON manifest carrying the
checkpoint identifier, the patch policy or prompt template, and the row
order (image ids or labels), so consumers can audit exactly what produced
the embeddings.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .container import DTYPE_DOUBLE, DTYPE_SINGLE, Section, write_container
from .encoders import resolve_encoder

log = logging.getLogger("clipexport")

DEFAULT_TEMPLATE = "The number of people in the photo is approximately {number}"

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".webp")

PATCH_POLICIES = ("resize-whole", "center-crop-224")


class UnreadableImage(Exception):
    pass


@dataclass
class ExportJob:
    checkpoint: str = "hash-proj-512"
    template: str = DEFAULT_TEMPLATE
    patch_policy: str = "resize-whole"
    image_dir: str | None = None
    labels_csv: str | None = None      # optional "image_id,count" lines
    label_set: tuple[int, ...] = ()    # prompt labels to embed
    output: str = "export.prcc"
    dtype: int = DTYPE_SINGLE

    def __post_init__(self):
        if self.patch_policy not in PATCH_POLICIES:
            raise ValueError(f"patch policy must be one of {PATCH_POLICIES}")


def _load_patch(path: Path, policy: str):
    from PIL import Image

    try:
        image = Image.open(path)
        image.load()
    except Exception as exc:
        raise UnreadableImage(f"{path}: {exc}") from exc
    image = image.convert("RGB")
    if policy == "center-crop-224":
        side = min(image.size)
        left = (image.width - side) // 2
        top = (image.height - side) // 2
        image = image.crop((left, top, left + side, top + side)).resize((224, 224), Image.BICUBIC)
    else:
        image = image.resize((224, 224), Image.BICUBIC)
    return image


def list_images(image_dir) -> list[Path]:
    root = Path(image_dir)
    return sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def _read_labels(path) -> dict[str, int]:
    labels = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, _, value = line.partition(",")
        if not value:
            raise ValueError(f"{path}:{lineno}: expected 'image_id,count'")
        labels[name.strip()] = int(value)
    return labels


def export_image_embeddings(job: ExportJob) -> Path:
    """One embedding row per readable image, ordered as the manifest lists them.

    Unreadable files are skipped with a warning; a missing label for any
    exported image is an error when a label file is supplied.
    """
    if not job.image_dir:
        raise ValueError("export_image_embeddings needs job.image_dir")
    encoder = resolve_encoder(job.checkpoint)
    ids: list[str] = []
    skipped: list[str] = []
    patches = []
    for path in list_images(job.image_dir):
        try:
            patches.append(_load_patch(path, job.patch_policy))
        except UnreadableImage as exc:
            log.warning("skipping unreadable image: %s", exc)
            skipped.append(path.name)
            continue
        ids.append(path.name)
    if not ids:
        raise UnreadableImage(f"no readable images in {job.image_dir}")
    rows = encoder.encode_images(patches)

    sections = [Section("EMB_IMG", job.dtype, rows)]
    if job.labels_csv:
        labels = _read_labels(job.labels_csv)
        missing = [i for i in ids if i not in labels]
        if missing:
            raise ValueError(f"label file lacks entries for: {missing[:5]}")
        counts = np.array([[float(labels[i])] for i in ids])
        sections.append(Section("COUNTS", DTYPE_DOUBLE, counts))

    out = Path(job.output)
    write_container(out, sections)
    _write_manifest(out, job, kind="images", order=ids, skipped=skipped, dim=encoder.dim)
    return out


def export_prompt_embeddings(job: ExportJob) -> Path:
    """One row per label, ordered as job.label_set; labels stored alongside."""
    if not job.label_set:
        raise ValueError("export_prompt_embeddings needs job.label_set")
    encoder = resolve_encoder(job.checkpoint)
    prompts = [job.template.format(number=label) for label in job.label_set]
    rows = encoder.encode_texts(prompts)
    sections = [
        Section("EMB_TXT", job.dtype, rows),
        Section("COUNTS", DTYPE_DOUBLE, np.array([[float(l)] for l in job.label_set])),
    ]
    out = Path(job.output)
    write_container(out, sections)
    _write_manifest(out, job, kind="prompts", order=[str(l) for l in job.label_set], skipped=[], dim=encoder.dim)
    return out


def _write_manifest(container_path: Path, job: ExportJob, kind: str, order, skipped, dim: int):
    manifest = {
        "kind": kind,
        "checkpoint": job.checkpoint,
        "template": job.template,
        "patch_policy": job.patch_policy,
        "embedding_dim": dim,
        "rows": order,
        "skipped": skipped,
    }
    Path(str(container_path) + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


# label-set builders matching the staged decoder's candidate structure

def hundreds_labels() -> tuple[int, ...]:
    return tuple(100 * j + 50 for j in range(10))


def trace_path_labels(h_digit: int, t_digit: int) -> tuple[int, ...]:
    """The 30 labels one staged decode can touch for fixed leading digits."""
    if not (0 <= h_digit <= 9 and 0 <= t_digit <= 9):
        raise ValueError("digits must lie in [0, 9]")
    tens = tuple(100 * h_digit + 10 * j + 5 for j in range(10))
    units = tuple(100 * h_digit + 10 * t_digit + j for j in range(10))
    return hundreds_labels() + tens + units


def all_labels(range_max: int = 1000) -> tuple[int, ...]:
    return tuple(range(range_max))
