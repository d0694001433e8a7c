"""End-to-end experiment pipeline: data, training, adapter, decoding, reports.

Every run is fully determined by its configuration seeds: rerunning the
same config produces a byte-identical predictions CSV. Reports embed the
resolved configuration and the tool version.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .adapter import AdapterConfig, AdapterStore
from .config import ExperimentConfig, config_to_text
from .decoder import DecodeBatchResult, PromptCache, decode_batch
from .embedding import l2_normalize
from .errors import RoughCountError
from .exchange import (
    find_section,
    read_container,
    samples_from_sections,
    section_from_adapter,
    section_from_encoder,
    write_container,
)
from .losses import LossConfig
from .metrics import EvalReport, build_report
from .roughlabels import RoughLabelSpec, derive_seed, sample_training_label
from .toy import (
    CountSample,
    NumericTextEmbedder,
    ToyImageEncoder,
    TrainConfig,
    feature_matrix,
    gen_dataset,
    train,
    true_counts,
)

MODE_ORDER = ("flat", "progressive", "progressive+adapter")

CSV_COLUMNS = (
    "sample_id",
    "gt",
    "rough_lo",
    "rough_hi",
    "pred_flat",
    "pred_prog",
    "pred_prog_adapter",
    "evals",
)


@contextlib.contextmanager
def _stage(name: str):
    """Annotate toolkit errors with the pipeline stage they came from."""
    try:
        yield
    except RoughCountError as exc:
        raise type(exc)(f"[stage {name}] {exc}") from exc


class ContainerPromptProvider:
    """Prompt embeddings loaded from an exchange container (EMB_TXT + COUNTS)."""

    def __init__(self, path, template: str):
        sections = read_container(path)
        emb = find_section(sections, "EMB_TXT")
        labels = find_section(sections, "COUNTS")
        if emb is None or labels is None:
            raise RoughCountError(f"{path}: prompt container needs EMB_TXT and COUNTS sections")
        self.template = template
        self._rows = {
            int(round(float(labels.data[i, 0]))): np.asarray(emb.data[i], dtype=np.float64)
            for i in range(emb.data.shape[0])
        }

    def embed_label(self, label: int) -> np.ndarray:
        row = self._rows.get(int(label))
        if row is None:
            raise KeyError(f"no prompt embedding for label {label}")
        return row


@dataclass
class PreparedData:
    train: list[CountSample]
    test: list[CountSample]
    test_embeddings: np.ndarray | None = None  # set for embeddings datasets


def prepare_dataset(cfg: ExperimentConfig) -> PreparedData:
    ds = cfg.dataset
    rough = RoughLabelSpec(error_pct=cfg.rough.error_pct, experts=cfg.rough.experts, seed=cfg.rough.seed)
    with _stage("dataset"):
        if ds.kind == "synthetic":
            samples = gen_dataset(
                (ds.count_min, ds.count_max),
                ds.size,
                ds.input_dim,
                noise_scale=ds.noise_scale,
                seed=ds.seed,
                n_objects=ds.objects,
                rough=rough,
            )
            split = ds.size - ds.test_size
            return PreparedData(train=samples[:split], test=samples[split:])
        sections = read_container(ds.container)
        if ds.kind == "container":
            samples = samples_from_sections(sections)
            split = max(len(samples) - ds.test_size, 0)
            return PreparedData(train=samples[:split], test=samples[split:])
        emb = find_section(sections, "EMB_IMG")
        counts = find_section(sections, "COUNTS")
        if emb is None or counts is None:
            raise RoughCountError(f"{ds.container}: embeddings dataset needs EMB_IMG and COUNTS")
        test = []
        for i in range(emb.data.shape[0]):
            gt = int(round(float(counts.data[i, 0])))
            from .roughlabels import RoughAnnotation

            test.append(
                CountSample(
                    features=np.asarray(emb.data[i], dtype=np.float64),
                    true_count=gt,
                    annotation=RoughAnnotation(gt=gt, expert_labels=(gt,), lo=gt, hi=gt),
                )
            )
        return PreparedData(train=[], test=test, test_embeddings=np.asarray(emb.data, dtype=np.float64))


def make_provider(cfg: ExperimentConfig):
    if cfg.dataset.kind == "embeddings":
        return ContainerPromptProvider(cfg.decode.prompts, cfg.text.template)
    return NumericTextEmbedder(dim=cfg.text.dim, seed=cfg.text.seed, template=cfg.text.template)


def train_encoder(cfg: ExperimentConfig, data: PreparedData, provider) -> tuple[ToyImageEncoder, list[float]]:
    t = cfg.train
    with _stage("train"):
        encoder = ToyImageEncoder(
            cfg.dataset.input_dim, cfg.text.dim, hidden_dim=t.hidden_dim or None, seed=t.seed
        )
        encoder.calibrate_input(feature_matrix(data.train))
        result = train(
            data.train,
            encoder,
            provider,
            TrainConfig(
                batch_size=t.batch_size,
                learning_rate=t.learning_rate,
                epochs=t.epochs,
                optimizer=t.optimizer,
                lr_schedule=t.lr_schedule,
                seed=t.seed,
            ),
            LossConfig(
                temperature=cfg.loss.temperature,
                stage_weights=tuple(cfg.loss.stage_weights),
                multi_positive_mask=cfg.loss.multi_positive_mask,
            ),
        )
    return result.encoder, result.loss_curve


def build_adapter(cfg: ExperimentConfig, data: PreparedData, encoder, provider) -> AdapterStore:
    """One pass over the train split: keys from images, values mixed with the
    prompt embedding of a seeded sample from each expert band."""
    a = cfg.adapter
    with _stage("build-adapter"):
        store = AdapterStore(
            AdapterConfig(capacity=a.capacity, distance_threshold=a.delta, mix_factor=a.mix_lambda)
        )
        if not data.train:
            return store
        feats = feature_matrix(data.train)
        embeddings = encoder.forward(feats)
        for i, sample in enumerate(data.train):
            label = sample_training_label(sample.annotation, derive_seed(a.seed, i))
            store.update(embeddings[i], provider.embed_label(label))
    return store


def _test_embeddings(cfg: ExperimentConfig, data: PreparedData, encoder) -> np.ndarray:
    if data.test_embeddings is not None:
        v = data.test_embeddings.copy()
    else:
        v = encoder.forward(feature_matrix(data.test))
    sigma = cfg.decode.query_noise_sigma
    if sigma > 0:
        rng = np.random.default_rng(cfg.decode.noise_seed)
        v = np.stack([l2_normalize(row) for row in v])
        v = v + sigma * rng.standard_normal(v.shape)
    return v


def decode_split(cfg: ExperimentConfig, data: PreparedData, encoder, store, provider) -> dict[str, DecodeBatchResult]:
    results: dict[str, DecodeBatchResult] = {}
    cache = PromptCache(provider)
    with _stage("decode"):
        v = _test_embeddings(cfg, data, encoder)
        for mode in MODE_ORDER:
            if mode not in cfg.decode.modes:
                continue
            if mode == "flat":
                results[mode] = decode_batch(v, provider, mode="flat", range_max=cfg.decode.range_max, cache=cache)
            elif mode == "progressive":
                results[mode] = decode_batch(v, provider, mode="progressive", cache=cache)
            else:
                refined = np.stack([store.refine(row) for row in v]) if store is not None and len(store) else v
                results[mode] = decode_batch(refined, provider, mode="progressive", cache=cache)
    return results


@dataclass
class ExperimentResult:
    reports: dict[str, EvalReport]
    loss_curve: list[float]
    config_text: str
    csv_path: Path | None = None
    report_path: Path | None = None


def _csv_text(data: PreparedData, results: dict[str, DecodeBatchResult]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    finals = {mode: [t.final for t in r.traces] for mode, r in results.items()}
    evals = {mode: [t.similarity_evaluations for t in r.traces] for mode, r in results.items()}
    for i, sample in enumerate(data.test):
        total_evals = sum(evals[m][i] for m in results)
        row = [
            str(i),
            str(sample.true_count),
            str(sample.annotation.lo),
            str(sample.annotation.hi),
            str(finals["flat"][i]) if "flat" in finals else "",
            str(finals["progressive"][i]) if "progressive" in finals else "",
            str(finals["progressive+adapter"][i]) if "progressive+adapter" in finals else "",
            str(total_evals),
        ]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _report_text(cfg: ExperimentConfig, reports: dict[str, EvalReport], loss_curve) -> str:
    lines = [f"tool.version = {__version__}"]
    if loss_curve:
        lines.append("train.final_epoch_loss = " + repr(loss_curve[-1]))
    for mode, rep in reports.items():
        prefix = f"result.{mode}"
        lines.append(f"{prefix}.mae = {rep.mae!r}")
        lines.append(f"{prefix}.mse = {rep.mse!r}")
        lines.append(f"{prefix}.raw_mse = {rep.raw_mse!r}")
        lines.append(f"{prefix}.evals_per_sample = {rep.similarity_evals_per_sample!r}")
        lines.append(f"{prefix}.decodes_per_sec = {rep.decodes_per_sec!r}")
        for band in rep.per_interval:
            lo, hi = band.band
            tag = f"{prefix}.band[{lo:g},{'inf' if hi is None else '%g' % hi})"
            lines.append(f"{tag} = n={band.n} mae={band.mae!r} mse={band.mse!r}")
    lines.append("")
    lines.append("# resolved configuration")
    lines.append(config_to_text(cfg).rstrip())
    return "\n".join(lines) + "\n"


def _report_csv(cfg: ExperimentConfig, reports: dict[str, EvalReport]) -> str:
    lines = ["mode,mae,mse,raw_mse,evals_per_sample,decodes_per_sec"]
    for mode, rep in reports.items():
        lines.append(
            f"{mode},{rep.mae!r},{rep.mse!r},{rep.raw_mse!r},"
            f"{rep.similarity_evals_per_sample!r},{rep.decodes_per_sec!r}"
        )
    lines.append(f"# tool.version = {__version__}")
    for cfg_line in config_to_text(cfg).rstrip().splitlines():
        lines.append(f"# {cfg_line}")
    return "\n".join(lines) + "\n"


def run_experiment(cfg: ExperimentConfig, out_dir) -> ExperimentResult:
    """Full pipeline; writes predictions, report, and checkpoints to out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    data = prepare_dataset(cfg)
    provider = make_provider(cfg)

    encoder = None
    loss_curve: list[float] = []
    if cfg.dataset.kind != "embeddings":
        encoder, loss_curve = train_encoder(cfg, data, provider)
        write_container(out / "model.prcc", [section_from_encoder(encoder)])

    store = None
    if "progressive+adapter" in cfg.decode.modes and cfg.dataset.kind != "embeddings":
        store = build_adapter(cfg, data, encoder, provider)
        write_container(out / "adapter.prcc", [section_from_adapter(store)])

    results = decode_split(cfg, data, encoder, store, provider)

    gts = true_counts(data.test)
    reports: dict[str, EvalReport] = {}
    with _stage("evaluate"):
        for mode, batch in results.items():
            preds = [t.final for t in batch.traces]
            reports[mode] = build_report(
                preds, gts, bands=cfg.bands(), traces=batch.traces, total_seconds=batch.total_seconds
            )

    csv_path = out / "predictions.csv"
    csv_path.write_text(_csv_text(data, results))
    if cfg.output.format == "csv":
        report_path = out / "report.csv"
        report_path.write_text(_report_csv(cfg, reports))
    else:
        report_path = out / "report.txt"
        report_path.write_text(_report_text(cfg, reports, loss_curve))

    return ExperimentResult(
        reports=reports,
        loss_curve=loss_curve,
        config_text=config_to_text(cfg),
        csv_path=csv_path,
        report_path=report_path,
    )


ROUGH_SWEEP = (0.05, 0.10, 0.15, 0.20, 0.30, 0.40, 0.50)


def ablate_rough_ranges(cfg: ExperimentConfig, out_dir, sweep=ROUGH_SWEEP) -> list[dict]:
    """Retrain once per error range; one row per range (progressive decode)."""
    out = Path(out_dir)
    rows = []
    for p in sweep:
        sub = replace(
            cfg,
            rough=replace(cfg.rough, error_pct=p),
            decode=replace(cfg.decode, modes=("progressive",)),
        )
        result = run_experiment(sub, out / f"rough_{int(round(p * 100)):02d}")
        rep = result.reports["progressive"]
        rows.append({"error_pct": p, "mae": rep.mae, "mse": rep.mse})
    _write_rows(out / "ablation_rough.csv", ("error_pct", "mae", "mse"), rows)
    return rows


def ablate_components(cfg: ExperimentConfig, out_dir) -> list[dict]:
    """Flat vs progressive vs progressive+adapter on one trained model."""
    out = Path(out_dir)
    sub = replace(cfg, decode=replace(cfg.decode, modes=MODE_ORDER))
    result = run_experiment(sub, out / "components")
    rows = []
    for mode in MODE_ORDER:
        rep = result.reports[mode]
        rows.append(
            {
                "mode": mode,
                "mae": rep.mae,
                "mse": rep.mse,
                "evals_per_sample": rep.similarity_evals_per_sample,
                "decodes_per_sec": rep.decodes_per_sec,
            }
        )
    _write_rows(
        out / "ablation_components.csv",
        ("mode", "mae", "mse", "evals_per_sample", "decodes_per_sec"),
        rows,
    )
    return rows


def _write_rows(path: Path, columns, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in columns))
    path.write_text("\n".join(lines) + "\n")
