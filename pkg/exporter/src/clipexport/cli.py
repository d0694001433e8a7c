"""clip-export: write image/prompt embedding containers for the core toolkit."""

from __future__ import annotations

import argparse
import logging
import sys

from .container import DTYPE_DOUBLE, DTYPE_SINGLE
from .encoders import CheckpointLoadFailure
from .export import (
    DEFAULT_TEMPLATE,
    ExportJob,
    all_labels,
    export_image_embeddings,
    export_prompt_embeddings,
    hundreds_labels,
    trace_path_labels,
)


def _parse_labels(spec: str) -> tuple[int, ...]:
    """all | hundreds | path:H,T | list:1,2,3"""
    if spec == "all":
        return all_labels()
    if spec == "hundreds":
        return hundreds_labels()
    if spec.startswith("path:"):
        h, _, t = spec[5:].partition(",")
        return trace_path_labels(int(h), int(t))
    if spec.startswith("list:"):
        return tuple(int(x) for x in spec[5:].split(",") if x.strip())
    raise argparse.ArgumentTypeError(f"bad label spec {spec!r}; use all|hundreds|path:H,T|list:..")


def _common(p):
    p.add_argument("--checkpoint", default="hash-proj-512",
                   help="checkpoint id: a transformers CLIP name, or hash-proj-<dim> for the offline encoder")
    p.add_argument("--template", default=DEFAULT_TEMPLATE)
    p.add_argument("--out", required=True, help="output container path")
    p.add_argument("--double", action="store_true", help="store embeddings as f64 (default f32)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clip-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-images", help="embed every image in a directory")
    _common(p)
    p.add_argument("--images", required=True, help="image directory")
    p.add_argument("--patch-policy", choices=("resize-whole", "center-crop-224"),
                   default="resize-whole")
    p.add_argument("--labels", help="optional CSV of image_id,count rows (adds a COUNTS section)")

    p = sub.add_parser("export-prompts", help="embed numeric prompts for a label set")
    _common(p)
    p.add_argument("--label-set", type=_parse_labels, default="hundreds",
                   help="all | hundreds | path:H,T | list:1,2,3 (default hundreds)")

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    dtype = DTYPE_DOUBLE if args.double else DTYPE_SINGLE
    try:
        if args.command == "export-images":
            job = ExportJob(
                checkpoint=args.checkpoint,
                template=args.template,
                patch_policy=args.patch_policy,
                image_dir=args.images,
                labels_csv=args.labels,
                output=args.out,
                dtype=dtype,
            )
            path = export_image_embeddings(job)
        else:
            label_set = args.label_set if isinstance(args.label_set, tuple) else _parse_labels(args.label_set)
            job = ExportJob(
                checkpoint=args.checkpoint,
                template=args.template,
                label_set=label_set,
                output=args.out,
                dtype=dtype,
            )
            path = export_prompt_embeddings(job)
    except CheckpointLoadFailure as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {path} (+ manifest)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
