"""Command-line surface for dataset generation, training, decoding, and reports."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, load_config
from .errors import RoughCountError
from .exchange import (
    read_container,
    section_from_adapter,
    section_from_encoder,
    sections_from_samples,
    write_container,
)
from .experiment import (
    ablate_components,
    ablate_rough_ranges,
    build_adapter,
    decode_split,
    make_provider,
    prepare_dataset,
    run_experiment,
    train_encoder,
)


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.format:
        cfg.output.format = args.format
    return cfg


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_data(args) -> int:
    cfg = _load(args)
    data = prepare_dataset(cfg)
    out = _out(args)
    nbytes = write_container(out / "dataset.prcc", sections_from_samples(data.train + data.test))
    print(f"wrote {out / 'dataset.prcc'} ({nbytes} bytes, {len(data.train)} train + {len(data.test)} test)")
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    data = prepare_dataset(cfg)
    provider = make_provider(cfg)
    encoder, curve = train_encoder(cfg, data, provider)
    out = _out(args)
    write_container(out / "model.prcc", [section_from_encoder(encoder)])
    (out / "loss_curve.csv").write_text(
        "epoch,mean_loss\n" + "\n".join(f"{i},{v!r}" for i, v in enumerate(curve)) + "\n"
    )
    print(f"wrote {out / 'model.prcc'}; final epoch loss {curve[-1]:.6f}")
    return 0


def cmd_build_adapter(args) -> int:
    cfg = _load(args)
    data = prepare_dataset(cfg)
    provider = make_provider(cfg)
    from .exchange import encoder_from_section, find_section

    sections = read_container(args.model)
    model = find_section(sections, "MODEL")
    if model is None:
        print(f"error: {args.model} has no MODEL section", file=sys.stderr)
        return 2
    encoder = encoder_from_section(model)
    store = build_adapter(cfg, data, encoder, provider)
    out = _out(args)
    write_container(out / "adapter.prcc", [section_from_adapter(store)])
    print(f"wrote {out / 'adapter.prcc'} ({len(store)} entries, step {store.step_counter})")
    return 0


def cmd_decode(args) -> int:
    cfg = _load(args)
    data = prepare_dataset(cfg)
    provider = make_provider(cfg)
    encoder = None
    if cfg.dataset.kind != "embeddings":
        from .exchange import encoder_from_section, find_section

        model = find_section(read_container(args.model), "MODEL")
        if model is None:
            print(f"error: {args.model} has no MODEL section", file=sys.stderr)
            return 2
        encoder = encoder_from_section(model)
    store = None
    if args.adapter:
        from .exchange import adapter_from_section, find_section

        adapter_section = find_section(read_container(args.adapter), "ADAPTER")
        if adapter_section is None:
            print(f"error: {args.adapter} has no ADAPTER section", file=sys.stderr)
            return 2
        store = adapter_from_section(adapter_section)
    results = decode_split(cfg, data, encoder, store, provider)
    out = _out(args)
    from .experiment import _csv_text

    (out / "predictions.csv").write_text(_csv_text(data, results))
    for mode, batch in results.items():
        print(f"{mode}: {len(batch.traces)} decodes at {batch.decodes_per_sec:.0f}/s")
    print(f"wrote {out / 'predictions.csv'}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load(args)
    result = run_experiment(cfg, _out(args))
    for mode, rep in result.reports.items():
        print(
            f"{mode}: mae={rep.mae:.3f} mse={rep.mse:.3f} "
            f"evals/sample={rep.similarity_evals_per_sample:.0f} "
            f"decodes/s={rep.decodes_per_sec:.0f}"
        )
    print(f"wrote {result.csv_path} and {result.report_path}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load(args)
    out = _out(args)
    if args.kind == "rough-labels":
        rows = ablate_rough_ranges(cfg, out)
        for row in rows:
            print(f"error_pct={row['error_pct']:.2f}  mae={row['mae']:.3f}  mse={row['mse']:.3f}")
    else:
        rows = ablate_components(cfg, out)
        for row in rows:
            print(
                f"{row['mode']:<22} mae={row['mae']:.3f} mse={row['mse']:.3f} "
                f"evals={row['evals_per_sample']:.0f} fps={row['decodes_per_sec']:.0f}"
            )
    return 0


def cmd_inspect(args) -> int:
    sections = read_container(args.path)
    print(f"{args.path}: {len(sections)} section(s)")
    for s in sections:
        rows, dim = s.data.shape
        kind = {1: "f32", 2: "f64"}[s.dtype]
        print(f"  {s.tag:<16} {kind}  rows={rows} dim={dim}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roughcount", description=__doc__)
    parser.add_argument("--version", action="version", version=f"roughcount {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="experiment config path (defaults apply when omitted)")
        p.add_argument("--seed", type=int, default=None, help="override every stream seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--format", choices=("csv", "structured-text"), default=None,
                       help="report format override")

    p = sub.add_parser("gen-data", help="generate a synthetic dataset container")
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the toy encoder, write a model checkpoint")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("build-adapter", help="populate the matching adapter from the train split")
    common(p)
    p.add_argument("--model", required=True, help="model container path")
    p.set_defaults(func=cmd_build_adapter)

    p = sub.add_parser("decode", help="decode the test split with a trained model")
    common(p)
    p.add_argument("--model", help="model container path (feature datasets)")
    p.add_argument("--adapter", help="adapter container path (enables refinement mode)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="full pipeline: train, decode, report")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="sweep error ranges or decoder components")
    common(p)
    p.add_argument("--kind", choices=("rough-labels", "components"), required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("inspect-container", help="print a container's section table")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RoughCountError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
