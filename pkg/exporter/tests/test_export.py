import json
import shutil

import numpy as np
import pytest
from PIL import Image

from clipexport.container import read_container
from clipexport.encoders import HashProjEncoder, resolve_encoder
from clipexport.export import (
    ExportJob,
    UnreadableImage,
    all_labels,
    export_image_embeddings,
    export_prompt_embeddings,
    hundreds_labels,
    trace_path_labels,
)


def make_image(path, seed, size=(60, 40)):
    rng = np.random.default_rng(seed)
    arr = rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
    Image.fromarray(arr).save(path)


@pytest.fixture()
def image_dir(tmp_path):
    d = tmp_path / "imgs"
    d.mkdir()
    make_image(d / "a.png", 1)
    make_image(d / "b.png", 2)
    return d


def test_label_set_builders():
    assert hundreds_labels() == tuple(range(50, 1000, 100))
    path = trace_path_labels(1, 2)
    assert len(path) == 30
    assert set(hundreds_labels()) <= set(path)
    assert tuple(range(120, 130)) == path[20:]
    assert len(all_labels()) == 1000


def test_resolve_encoder_hash_ids():
    enc = resolve_encoder("hash-proj-512")
    assert isinstance(enc, HashProjEncoder) and enc.dim == 512
    assert resolve_encoder("hash-proj-64").dim == 64


def test_prompt_export_hundreds(tmp_path):
    job = ExportJob(label_set=hundreds_labels(), output=str(tmp_path / "p.prcc"))
    path = export_prompt_embeddings(job)
    sections = {s.tag: s for s in read_container(path)}
    assert sections["EMB_TXT"].data.shape == (10, 512)
    assert [int(x) for x in sections["COUNTS"].data[:, 0]] == list(hundreds_labels())
    manifest = json.loads((tmp_path / "p.prcc.manifest.json").read_text())
    assert manifest["checkpoint"] == "hash-proj-512"
    assert manifest["embedding_dim"] == 512
    assert manifest["rows"] == [str(l) for l in hundreds_labels()]


def test_prompt_export_trace_path_30_rows(tmp_path):
    job = ExportJob(label_set=trace_path_labels(3, 7), output=str(tmp_path / "p.prcc"))
    sections = {s.tag: s for s in read_container(export_prompt_embeddings(job))}
    assert sections["EMB_TXT"].data.shape == (30, 512)


def test_same_label_twice_identical_rows(tmp_path):
    job = ExportJob(label_set=(42, 7, 42), output=str(tmp_path / "p.prcc"))
    rows = {s.tag: s for s in read_container(export_prompt_embeddings(job))}["EMB_TXT"].data
    assert np.array_equal(rows[0], rows[2])
    assert not np.array_equal(rows[0], rows[1])


def test_image_export_shapes_and_manifest(image_dir, tmp_path):
    job = ExportJob(image_dir=str(image_dir), output=str(tmp_path / "i.prcc"))
    path = export_image_embeddings(job)
    sections = {s.tag: s for s in read_container(path)}
    assert sections["EMB_IMG"].data.shape == (2, 512)
    norms = np.linalg.norm(sections["EMB_IMG"].data.astype(np.float64), axis=1)
    assert np.allclose(norms, 1.0, atol=1e-5)
    manifest = json.loads((tmp_path / "i.prcc.manifest.json").read_text())
    assert manifest["rows"] == ["a.png", "b.png"]
    assert len(manifest["rows"]) == sections["EMB_IMG"].data.shape[0]


def test_duplicate_image_rows_identical(image_dir, tmp_path):
    shutil.copyfile(image_dir / "a.png", image_dir / "a_copy.png")
    job = ExportJob(image_dir=str(image_dir), output=str(tmp_path / "i.prcc"))
    sections = {s.tag: s for s in read_container(export_image_embeddings(job))}
    rows = sections["EMB_IMG"].data.astype(np.float64)
    # rows sorted by filename: a.png, a_copy.png, b.png
    cos = float(rows[0] @ rows[1] / (np.linalg.norm(rows[0]) * np.linalg.norm(rows[1])))
    assert cos >= 1.0 - 1e-5


def test_unreadable_image_skipped_with_warning(image_dir, tmp_path, caplog):
    (image_dir / "broken.png").write_bytes(b"not an image at all")
    job = ExportJob(image_dir=str(image_dir), output=str(tmp_path / "i.prcc"))
    with caplog.at_level("WARNING", logger="clipexport"):
        path = export_image_embeddings(job)
    assert any("broken.png" in r.message for r in caplog.records)
    sections = {s.tag: s for s in read_container(path)}
    assert sections["EMB_IMG"].data.shape[0] == 2
    manifest = json.loads((tmp_path / "i.prcc.manifest.json").read_text())
    assert manifest["skipped"] == ["broken.png"]


def test_labels_csv_adds_counts(image_dir, tmp_path):
    labels = tmp_path / "labels.csv"
    labels.write_text("a.png,12\nb.png,345\n")
    job = ExportJob(image_dir=str(image_dir), labels_csv=str(labels), output=str(tmp_path / "i.prcc"))
    sections = {s.tag: s for s in read_container(export_image_embeddings(job))}
    assert [int(x) for x in sections["COUNTS"].data[:, 0]] == [12, 345]


def test_labels_csv_missing_entry_errors(image_dir, tmp_path):
    labels = tmp_path / "labels.csv"
    labels.write_text("a.png,12\n")
    job = ExportJob(image_dir=str(image_dir), labels_csv=str(labels), output=str(tmp_path / "i.prcc"))
    with pytest.raises(ValueError, match="b.png"):
        export_image_embeddings(job)


def test_empty_dir_errors(tmp_path):
    empty = tmp_path / "none"
    empty.mkdir()
    with pytest.raises(UnreadableImage):
        export_image_embeddings(ExportJob(image_dir=str(empty), output=str(tmp_path / "x.prcc")))


def test_reexport_deterministic(image_dir, tmp_path):
    job_a = ExportJob(image_dir=str(image_dir), output=str(tmp_path / "a.prcc"))
    job_b = ExportJob(image_dir=str(image_dir), output=str(tmp_path / "b.prcc"))
    export_image_embeddings(job_a)
    export_image_embeddings(job_b)
    assert (tmp_path / "a.prcc").read_bytes() == (tmp_path / "b.prcc").read_bytes()


@pytest.mark.parametrize("policy", ["resize-whole", "center-crop-224"])
def test_patch_policies(image_dir, tmp_path, policy):
    job = ExportJob(image_dir=str(image_dir), patch_policy=policy, output=str(tmp_path / "i.prcc"))
    sections = {s.tag: s for s in read_container(export_image_embeddings(job))}
    assert sections["EMB_IMG"].data.shape == (2, 512)


def test_bad_patch_policy_rejected():
    with pytest.raises(ValueError):
        ExportJob(patch_policy="tile-everything")


def test_cli_prompt_and_image_export(image_dir, tmp_path):
    from clipexport.cli import main

    out = tmp_path / "cli_p.prcc"
    assert main(["export-prompts", "--label-set", "hundreds", "--out", str(out)]) == 0
    assert out.exists() and (tmp_path / "cli_p.prcc.manifest.json").exists()

    out2 = tmp_path / "cli_i.prcc"
    assert main(["export-images", "--images", str(image_dir), "--out", str(out2), "--double"]) == 0
    sections = {s.tag: s for s in read_container(out2)}
    assert sections["EMB_IMG"].dtype == 2


def test_real_checkpoint_if_available(tmp_path):
    from clipexport.encoders import CheckpointLoadFailure, HFClipEncoder

    try:
        encoder = HFClipEncoder("openai/clip-vit-base-patch16")
    except CheckpointLoadFailure as exc:
        pytest.skip(f"real checkpoint unavailable here: {exc}")
    rows = encoder.encode_texts(["a photo of 7 people", "a photo of 700 people"])
    assert rows.shape == (2, 512)
