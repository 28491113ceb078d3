import json

import numpy as np
import pytest

from skinbench.colorimetry import ItaClass
from skinbench.errors import ManifestError, ReportError
from skinbench.pipeline.config import RunConfig
from skinbench.pipeline.fixtures import CLASS_RAMP, generate_fixtures, ramp_color
from skinbench.pipeline.manifest import Manifest, load_manifest, write_manifest_csv
from skinbench.pipeline.records import (
    read_records_csv,
    record_from_dict,
    record_to_dict,
)
from skinbench.pipeline.reports import generate_report
from skinbench.pipeline.runner import read_labels_csv, run


@pytest.fixture(scope="session")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("fixtures")
    manifest_path = generate_fixtures(root, count=4)
    return load_manifest(manifest_path)


def _config(tmp_path, **kw):
    defaults = dict(out_dir=str(tmp_path / "out"), jobs=1)
    defaults.update(kw)
    return RunConfig(**defaults)


# --- manifest ----------------------------------------------------------------


def test_manifest_loads_generated_fixtures(dataset):
    assert len(dataset) == 4
    row = dataset.rows[0]
    assert row.image_id == "fix00"
    assert row.photo.is_file() and row.albedo.is_file()
    assert row.face_box is not None and row.face_box.w > 0


def test_manifest_duplicate_id_rejected(tmp_path, dataset):
    rows = [
        {"id": "dup", "photo": str(dataset.rows[0].photo)},
        {"id": "dup", "photo": str(dataset.rows[1].photo)},
    ]
    path = tmp_path / "m.csv"
    write_manifest_csv(rows, path)
    with pytest.raises(ManifestError, match="dup"):
        load_manifest(path)


def test_manifest_missing_file_names_row(tmp_path):
    path = tmp_path / "m.csv"
    write_manifest_csv([{"id": "a", "photo": "nope.png"}], path)
    with pytest.raises(ManifestError, match="row 2"):
        load_manifest(path)


def test_manifest_row_without_albedo_loads(tmp_path, dataset):
    rows = [{"id": "only-photo", "photo": str(dataset.rows[0].photo)}]
    path = tmp_path / "m.csv"
    write_manifest_csv(rows, path)
    manifest = load_manifest(path)
    assert manifest.rows[0].albedo is None


def test_manifest_json_variant(tmp_path, dataset):
    path = tmp_path / "m.json"
    path.write_text(
        json.dumps(
            [
                {
                    "id": "j1",
                    "photo": str(dataset.rows[0].photo),
                    "face_box": [2, 3, 40, 50],
                }
            ]
        )
    )
    manifest = load_manifest(path)
    assert manifest.rows[0].face_box.w == 40


def test_manifest_partial_face_box_rejected(tmp_path, dataset):
    path = tmp_path / "m.csv"
    write_manifest_csv(
        [{"id": "a", "photo": str(dataset.rows[0].photo), "face_x": 3}], path
    )
    with pytest.raises(ManifestError, match="face box"):
        load_manifest(path)


# --- config --------------------------------------------------------------------


def test_config_hash_ignores_jobs_and_out_dir():
    a = RunConfig(jobs=1, out_dir="x")
    b = RunConfig(jobs=8, out_dir="y")
    assert a.config_hash() == b.config_hash()
    c = RunConfig(kmeans_seed=7)
    assert c.config_hash() != a.config_hash()


def test_config_validates_subsets():
    with pytest.raises(ManifestError):
        RunConfig(methods=())
    with pytest.raises(ManifestError):
        RunConfig(methods=("cheek", "sonar"))
    with pytest.raises(ManifestError):
        RunConfig(recolors=("normalize", "normalize"))


def test_config_json_round_trip(tmp_path):
    cfg = RunConfig(methods=("cheek", "mask"), kmeans_seed=3)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    back = RunConfig.from_json_file(path)
    assert back == cfg
    path.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(ManifestError, match="bogus"):
        RunConfig.from_json_file(path)


# --- runner ----------------------------------------------------------------------


def test_run_cardinality_single_image(tmp_path, dataset):
    sub = Manifest(dataset.rows[:1], dataset.base_dir)
    records, ledger, labels = run(sub, _config(tmp_path))
    assert ledger.cardinality == 1 * 4 * 2 * 3 == 24
    assert len(records) == 24
    assert set(labels) == {"fix00"}


def test_run_skips_albedo_methods_without_albedo_and_imagesh_without_sh(tmp_path, dataset):
    keep = dataset.rows[0]
    bare = type(keep)(
        image_id="bare",
        photo=keep.photo,
        albedo=None,
        landmarks=keep.landmarks,
        sh=None,
        face_box=keep.face_box,
    )
    manifest = Manifest((keep, bare), dataset.base_dir)
    records, ledger, labels = run(manifest, _config(tmp_path))
    assert ledger.cardinality == 48
    by_status = ledger.counts()
    # bare: cheek-albedo/mask-albedo cells (2*2*3=12) skipped for albedo; cheek/mask
    # image-sh cells (2*2=4) skipped for lighting.
    assert by_status["skipped"] == 16
    assert by_status["ok"] == 32
    reasons = {c.reason for c in ledger.cells if c.status == "skipped"}
    assert any("albedo" in r for r in reasons)
    assert any("SH" in r for r in reasons)
    assert set(labels) == {"fix00"}  # bare image lacks all four estimates


def test_run_is_deterministic_across_worker_counts(tmp_path, dataset):
    sub = Manifest(dataset.rows[:3], dataset.base_dir)
    rec1, _, _ = run(sub, _config(tmp_path / "a", jobs=1, cache=False))
    rec4, _, _ = run(sub, _config(tmp_path / "b", jobs=4, cache=False))
    csv1 = (tmp_path / "a" / "out" / "records.csv").read_bytes()
    csv4 = (tmp_path / "b" / "out" / "records.csv").read_bytes()
    assert csv1 == csv4
    assert [record_to_dict(r) for r in rec1] == [record_to_dict(r) for r in rec4]


def test_rerun_hits_cache_and_reproduces_bytes(tmp_path, dataset):
    sub = Manifest(dataset.rows[:2], dataset.base_dir)
    cfg = _config(tmp_path)
    run(sub, cfg)
    first = (tmp_path / "out" / "records.csv").read_bytes()
    _, ledger2, _ = run(sub, cfg)
    second = (tmp_path / "out" / "records.csv").read_bytes()
    assert first == second
    ok_cells = [c for c in ledger2.cells if c.status == "ok"]
    assert ok_cells and all(c.cached for c in ok_cells)
    # No stray temp files from atomic writes.
    assert not list((tmp_path / "out").glob(".*tmp*"))


def test_partial_cache_resume_matches_clean_run(tmp_path, dataset):
    # Simulate a run killed mid-way: leave only half the cache entries from a
    # completed run, delete the outputs, rerun; bytes must match a clean run.
    sub = Manifest(dataset.rows[:2], dataset.base_dir)
    clean_cfg = _config(tmp_path / "clean")
    run(sub, clean_cfg)
    clean = (tmp_path / "clean" / "out" / "records.csv").read_bytes()

    resumed_cfg = _config(tmp_path / "resumed")
    resumed_dir = tmp_path / "resumed" / "out"
    run(sub, resumed_cfg)
    for i, entry in enumerate(sorted((resumed_dir / "cache").glob("*.json"))):
        if i % 2 == 0:
            entry.unlink()
    (resumed_dir / "records.csv").unlink()
    (resumed_dir / "ledger.json").unlink()
    _, ledger, _ = run(sub, resumed_cfg)
    assert (resumed_dir / "records.csv").read_bytes() == clean
    cached = sum(1 for c in ledger.cells if c.cached)
    assert 0 < cached < ledger.cardinality  # genuinely resumed, not recomputed


def test_corrupt_cache_entry_is_recomputed(tmp_path, dataset):
    sub = Manifest(dataset.rows[:1], dataset.base_dir)
    cfg = _config(tmp_path, methods=("cheek",), lightings=("frontal",))
    run(sub, cfg)
    first = (tmp_path / "out" / "records.csv").read_bytes()
    for f in (tmp_path / "out" / "cache").glob("*.json"):
        f.write_text("{broken")
    _, ledger, _ = run(sub, cfg)
    assert (tmp_path / "out" / "records.csv").read_bytes() == first
    assert all(not c.cached for c in ledger.cells if c.status == "ok")


def test_closed_loop_identity_ambient(tmp_path, dataset):
    # Rewrite the SH files to the identity environment, then render a uniform
    # base on the flat proxy: every method must reproduce its reference
    # estimate within the "not perceptible" band.
    from skinbench.relight import ShLighting, save_sh

    for row in dataset.rows:
        save_sh(ShLighting.ambient(1.0), row.sh)
    try:
        cfg = _config(
            tmp_path, proxy_kind="flat", tex_amplitude=0.0, lightings=("image-sh",)
        )
        records, ledger, _ = run(dataset, cfg)
        assert ledger.counts()["ok"] == 4 * 4 * 2 * 1
        for rec in records:
            assert rec.delta_e < 1.0, (rec.image_id, rec.method.value, rec.delta_e)
    finally:
        from skinbench.pipeline.fixtures import attenuation

        for i, row in enumerate(dataset.rows):
            save_sh(ShLighting.ambient(attenuation(i, 12)), row.sh)


def test_labels_round_trip(tmp_path, dataset):
    sub = Manifest(dataset.rows[:2], dataset.base_dir)
    _, _, labels = run(sub, _config(tmp_path))
    loaded = read_labels_csv(tmp_path / "out" / "labels.csv")
    assert set(loaded) == set(labels)
    for image_id, label in labels.items():
        assert loaded[image_id].ita_class is label.ita_class
        assert loaded[image_id].resolution == label.resolution


# --- records serialization --------------------------------------------------------


def test_records_csv_round_trip(tmp_path, dataset):
    sub = Manifest(dataset.rows[:1], dataset.base_dir)
    records, _, _ = run(sub, _config(tmp_path))
    rows, config_hash = read_records_csv(tmp_path / "out" / "records.csv")
    assert len(rows) == len(records)
    assert config_hash == RunConfig(out_dir="z").config_hash()
    for row, rec in zip(rows, records):
        assert row.image_id == rec.image_id
        assert row.method == rec.method.value
        assert row.delta_e == pytest.approx(rec.delta_e, abs=1e-9)
        assert row.rendered_class is rec.rendered_class


def test_record_dict_round_trip(tmp_path, dataset):
    sub = Manifest(dataset.rows[:1], dataset.base_dir)
    records, _, _ = run(sub, _config(tmp_path, methods=("mask",), lightings=("frontal",)))
    rec = records[0]
    back = record_from_dict(record_to_dict(rec))
    assert back == rec


# --- fixtures ----------------------------------------------------------------------


def test_ramp_spans_all_classes_in_order():
    from skinbench.colorimetry import ita_class, ita_degrees, srgb_to_lab

    classes = [
        ita_class(ita_degrees(srgb_to_lab(ramp_color(i)))) for i in range(12)
    ]
    assert classes == [
        ItaClass.I, ItaClass.I,
        ItaClass.II, ItaClass.II,
        ItaClass.III, ItaClass.III,
        ItaClass.IV, ItaClass.IV,
        ItaClass.V, ItaClass.V,
        ItaClass.VI, ItaClass.VI,
    ]
    assert len(CLASS_RAMP) == 12


def test_fixture_cheek_rois_sample_pure_skin(dataset):
    from skinbench.extraction import cheek_rois
    from skinbench.imgio import load_image

    row = dataset.rows[0]
    albedo = load_image(row.albedo)
    h, w = albedo.shape[:2]
    skin = ramp_color(0).as_array()
    for roi in cheek_rois(row.face_box, (w, h)):
        block = albedo[roi.y : roi.y + roi.h, roi.x : roi.x + roi.w]
        assert np.abs(block - skin).max() < 2.0 / 255.0


# --- reports ------------------------------------------------------------------------


@pytest.fixture(scope="session")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("small_run")
    manifest = load_manifest(generate_fixtures(root / "data", count=3))
    cfg = RunConfig(out_dir=str(root / "out"), jobs=2)
    run(manifest, cfg)
    return root / "out"


def test_report_bundle_contents(small_run, tmp_path):
    index = generate_report(small_run / "records.csv", tmp_path)
    reports = index.parent
    names = {p.name for p in reports.iterdir()}
    assert "median_delta_e_by_method.csv" in names
    assert "median_delta_e_by_lighting.csv" in names
    assert "median_ita_error_by_class.csv" in names
    assert "confusion_matrix.csv" in names
    assert "confusion_matrix.svg" in names
    assert "box_delta_e_by_method.svg" in names
    assert "stats.json" in names
    assert "posthoc.csv" in names
    assert index.name == "index.html"
    posthoc = (reports / "posthoc.csv").read_text().splitlines()
    assert posthoc[1] == "test,correction,group_a,group_b,z,p_raw,p_adjusted"
    assert len(posthoc) > 2

    stats = json.loads((reports / "stats.json").read_text())
    assert stats["tests"], "stats battery must not be empty"
    for entry in stats["tests"]:
        assert 0.0 <= entry["p_value"] <= 1.0
        assert entry["correction"] == "bonferroni"
    test_names = {t["test"] for t in stats["tests"]}
    assert "delta_e ~ kw_cells(method*lighting)" in test_names


def test_report_confusion_rows_match_labels(small_run, tmp_path):
    generate_report(small_run / "records.csv", tmp_path)
    labels = read_labels_csv(small_run / "labels.csv")
    rows, _ = read_records_csv(small_run / "records.csv")
    text = (tmp_path / "reports" / "confusion_matrix.csv").read_text().splitlines()
    counts = {}
    for line in text[2:]:
        parts = line.split(",")
        counts[parts[0]] = sum(int(v) for v in parts[1:])
    for cls_name, total in counts.items():
        expected = sum(
            1 for r in rows if labels[r.image_id].ita_class.name == cls_name
        )
        assert total == expected


def test_report_regeneration_is_byte_identical(small_run, tmp_path):
    a = generate_report(small_run / "records.csv", tmp_path / "a").parent
    b = generate_report(small_run / "records.csv", tmp_path / "b").parent
    files_a = sorted(p.name for p in a.iterdir())
    files_b = sorted(p.name for p in b.iterdir())
    assert files_a == files_b
    for name in files_a:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_report_requires_records(tmp_path):
    with pytest.raises(ReportError):
        generate_report(tmp_path / "missing.csv", tmp_path)


def test_svg_files_embed_config_hash(small_run, tmp_path):
    generate_report(small_run / "records.csv", tmp_path)
    rows, config_hash = read_records_csv(small_run / "records.csv")
    svg = (tmp_path / "reports" / "box_delta_e_by_method.svg").read_text()
    assert f"config_hash={config_hash}" in svg
