"""The batch loop: extract -> recolor -> relight -> re-extract -> score.

Every (image x method x recolor x lighting) cell is independent and pure, so
cells run in a thread pool and the record list is sorted before writing;
output bytes do not depend on worker count. Per-cell results are cached by
content hash (config + input file bytes + cell coordinates) with atomic
writes, so an interrupted run resumes cleanly.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from skinbench.analysis import EvalRecord, GroundTruthLabel, ground_truth_class
from skinbench.errors import SkinbenchError
from skinbench.extraction import (
    ExtractionInput,
    ExtractionMethod,
    ExtractionParams,
    Landmarks,
    SkinMask,
    cheek_rois,
    extract,
    mean_color,
    cluster_estimate,
)
from skinbench.face_detect import (
    Cascade,
    FaceBox,
    default_cascade,
    detect_faces,
    load_cascade,
    select_primary_face,
)
from skinbench.imgio import load_image
from skinbench.pipeline.config import RunConfig
from skinbench.pipeline.manifest import Manifest, ManifestRow
from skinbench.pipeline.records import (
    record_from_dict,
    record_to_dict,
    records_to_csv,
)
from skinbench.recolor import Texture, recolor, synthetic_base_texture
from skinbench.relight import LightingConfig, RenderProxy, load_sh, render_proxy

OK = "ok"
SKIPPED = "skipped"
ERROR = "error"


@dataclass
class CellStatus:
    image_id: str
    method: str
    recolor: str
    lighting: str
    status: str
    reason: str = ""
    seconds: float = 0.0
    cached: bool = False


@dataclass
class RunLedger:
    cells: list[CellStatus] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    config_hash: str = ""

    @property
    def cardinality(self) -> int:
        return len(self.cells)

    def counts(self) -> dict[str, int]:
        out = {OK: 0, SKIPPED: 0, ERROR: 0}
        for cell in self.cells:
            out[cell.status] += 1
        return out

    def to_json(self) -> str:
        return json.dumps(
            {
                "config": self.config,
                "config_hash": self.config_hash,
                "counts": self.counts(),
                "cardinality": self.cardinality,
                "cells": [
                    {
                        "image_id": c.image_id,
                        "method": c.method,
                        "recolor": c.recolor,
                        "lighting": c.lighting,
                        "status": c.status,
                        "reason": c.reason,
                        "seconds": round(c.seconds, 6),
                        "cached": c.cached,
                    }
                    for c in self.cells
                ],
            },
            indent=2,
        )


@dataclass
class _ImageBundle:
    row: ManifestRow
    photo: np.ndarray
    albedo: np.ndarray | None
    landmarks: Landmarks | None
    sh_path: Path | None
    face_box: FaceBox | None
    face_error: str
    content_hash: str


def _atomic_write(path: Path, data: str) -> None:
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(data, encoding="utf-8")
    os.replace(tmp, path)


def _hash_row_inputs(row: ManifestRow) -> str:
    h = hashlib.sha256()
    for p in (row.photo, row.albedo, row.landmarks, row.sh):
        if p is None:
            h.update(b"<none>")
        else:
            h.update(p.read_bytes())
        h.update(b"\x00")
    if row.face_box is not None:
        h.update(str(row.face_box).encode())
    return h.hexdigest()


def _load_bundle(row: ManifestRow, cascade: Cascade | None, need_face: bool) -> _ImageBundle:
    photo = load_image(row.photo)
    albedo = load_image(row.albedo) if row.albedo else None
    landmarks = (
        Landmarks.from_text(row.landmarks.read_text(encoding="utf-8"))
        if row.landmarks
        else None
    )
    face_box = row.face_box
    face_error = ""
    if face_box is None and need_face:
        if cascade is None:
            face_error = "no face box in manifest and no cascade configured"
        else:
            face_box = select_primary_face(detect_faces(photo, cascade))
            if face_box is None:
                face_error = "face not found"
    return _ImageBundle(
        row=row,
        photo=photo,
        albedo=albedo,
        landmarks=landmarks,
        sh_path=row.sh,
        face_box=face_box,
        face_error=face_error,
        content_hash=_hash_row_inputs(row),
    )


def _coverage_bbox(proxy: RenderProxy) -> FaceBox:
    ys, xs = np.nonzero(proxy.coverage)
    return FaceBox(
        int(xs.min()), int(ys.min()), int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1)
    )


def _extract_rendered(
    rendered: np.ndarray,
    method: ExtractionMethod,
    proxy: RenderProxy,
    config: RunConfig,
    params: ExtractionParams,
):
    h, w = rendered.shape[:2]
    bbox = _coverage_bbox(proxy)
    if config.render_roi == "center-patch":
        side = max(2, round(0.30 * min(bbox.w, bbox.h)))
        cx = bbox.x + bbox.w // 2
        cy = bbox.y + bbox.h // 2
        from skinbench.extraction import RegionSpec

        patch = RegionSpec(cx - side // 2, cy - side // 2, side, side, side="center")
        if method.family == "cheek":
            return mean_color(rendered, [patch], method)
        mask = np.zeros((h, w), dtype=bool)
        mask[patch.y : patch.y + patch.h, patch.x : patch.x + patch.w] = True
        return cluster_estimate(
            rendered,
            SkinMask(mask & proxy.coverage),
            k=params.kmeans_k,
            top_m=params.kmeans_top_m,
            seed=params.kmeans_seed,
            method=method,
        )
    if method.family == "cheek":
        rois = cheek_rois(bbox, (w, h), params)
        return mean_color(rendered, rois, method)
    return cluster_estimate(
        rendered,
        SkinMask(proxy.coverage),
        k=params.kmeans_k,
        top_m=params.kmeans_top_m,
        seed=params.kmeans_seed,
        method=method,
    )


@dataclass
class _Cell:
    bundle: _ImageBundle
    method: ExtractionMethod
    recolor_tag: str
    lighting_tag: str


def _cell_cache_key(config_hash: str, cell: _Cell) -> str:
    blob = "|".join(
        [
            config_hash,
            cell.bundle.content_hash,
            cell.bundle.row.image_id,
            cell.method.value,
            cell.recolor_tag,
            cell.lighting_tag,
        ]
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _run_cell(
    cell: _Cell,
    reference,
    base_texture: Texture,
    proxy: RenderProxy,
    config: RunConfig,
    params: ExtractionParams,
) -> EvalRecord:
    if cell.lighting_tag == "image-sh":
        lighting = LightingConfig("image-sh", load_sh(cell.bundle.sh_path))
    else:
        lighting = LightingConfig(cell.lighting_tag)
    recolored = recolor(base_texture, reference.mean, cell.recolor_tag)
    rendered = render_proxy(recolored, lighting, proxy, exposure=config.exposure)
    rendered_est = _extract_rendered(rendered, cell.method, proxy, config, params)
    return EvalRecord.from_estimates(
        image_id=cell.bundle.row.image_id,
        method=cell.method,
        recolor=cell.recolor_tag,
        lighting=cell.lighting_tag,
        reference=reference,
        rendered=rendered_est,
    )


def run(
    manifest: Manifest, config: RunConfig
) -> tuple[list[EvalRecord], RunLedger, dict[str, GroundTruthLabel]]:
    """Run the benchmark; writes records.csv, ledger.json, labels.csv.

    Returns the sorted records, the ledger (one entry per cell, cardinality
    = images x methods x recolors x lightings), and the ground-truth labels.
    """
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache_dir = out_dir / "cache"
    if config.cache:
        cache_dir.mkdir(exist_ok=True)
    config_hash = config.config_hash()

    methods = [ExtractionMethod(m) for m in config.methods]
    need_face = any(m.family == "cheek" for m in methods)
    cascade = None
    if need_face and any(r.face_box is None for r in manifest.rows):
        cascade = (
            load_cascade(config.cascade_path) if config.cascade_path else default_cascade()
        )

    params = config.extraction_params()
    base_texture = synthetic_base_texture(
        config.tex_width,
        config.tex_height,
        seed=config.tex_seed,
        amplitude=config.tex_amplitude,
        grid=config.tex_grid,
    )
    proxy = (
        RenderProxy.sphere(config.tex_width, config.tex_height)
        if config.proxy_kind == "sphere"
        else RenderProxy.flat(config.tex_width, config.tex_height)
    )

    bundles = [_load_bundle(row, cascade, need_face) for row in manifest.rows]

    # Reference estimates, one per (image, method); failures become per-cell
    # skip/error entries instead of aborting the batch.
    references: dict[tuple[str, str], object] = {}
    failures: dict[tuple[str, str], tuple[str, str]] = {}
    for bundle in bundles:
        inp = ExtractionInput(
            photo=bundle.photo,
            albedo=bundle.albedo,
            landmarks=bundle.landmarks,
            face_box=bundle.face_box,
        )
        for method in methods:
            key = (bundle.row.image_id, method.value)
            if method.uses_albedo and bundle.albedo is None:
                failures[key] = (SKIPPED, "no albedo map for this row")
                continue
            if method.family == "cheek" and bundle.face_box is None:
                failures[key] = (ERROR, bundle.face_error or "face not found")
                continue
            try:
                references[key] = extract(inp, method, params)
            except SkinbenchError as exc:
                failures[key] = (ERROR, str(exc))

    # Ground-truth labels need one estimate per method, so they exist only
    # when the config runs all four and the row's inputs support them.
    labels: dict[str, GroundTruthLabel] = {}
    if set(methods) == set(ExtractionMethod):
        for bundle in bundles:
            ests = [
                references.get((bundle.row.image_id, m.value))
                for m in ExtractionMethod
            ]
            if all(e is not None for e in ests):
                labels[bundle.row.image_id] = ground_truth_class(
                    ests, bundle.row.image_id
                )

    cells = [
        _Cell(bundle, method, recolor_tag, lighting_tag)
        for bundle in bundles
        for method in methods
        for recolor_tag in config.recolors
        for lighting_tag in config.lightings
    ]

    def process(cell: _Cell) -> tuple[CellStatus, EvalRecord | None]:
        t0 = time.perf_counter()
        ident = dict(
            image_id=cell.bundle.row.image_id,
            method=cell.method.value,
            recolor=cell.recolor_tag,
            lighting=cell.lighting_tag,
        )
        key = (cell.bundle.row.image_id, cell.method.value)
        if key in failures:
            status, reason = failures[key]
            return CellStatus(**ident, status=status, reason=reason), None
        if cell.lighting_tag == "image-sh" and cell.bundle.sh_path is None:
            return (
                CellStatus(**ident, status=SKIPPED, reason="no SH lighting file"),
                None,
            )
        cache_path = cache_dir / f"{_cell_cache_key(config_hash, cell)}.json"
        if config.cache and cache_path.is_file():
            try:
                record = record_from_dict(json.loads(cache_path.read_text()))
                return (
                    CellStatus(
                        **ident,
                        status=OK,
                        seconds=time.perf_counter() - t0,
                        cached=True,
                    ),
                    record,
                )
            except (json.JSONDecodeError, KeyError, ValueError):
                pass  # corrupt cache entry: recompute and overwrite
        try:
            record = _run_cell(
                cell, references[key], base_texture, proxy, config, params
            )
        except SkinbenchError as exc:
            return (
                CellStatus(
                    **ident,
                    status=ERROR,
                    reason=str(exc),
                    seconds=time.perf_counter() - t0,
                ),
                None,
            )
        if config.cache:
            _atomic_write(cache_path, json.dumps(record_to_dict(record), indent=2))
        return (
            CellStatus(**ident, status=OK, seconds=time.perf_counter() - t0),
            record,
        )

    results: list[tuple[CellStatus, EvalRecord | None]]
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(process, cells))
    else:
        results = [process(cell) for cell in cells]

    ledger = RunLedger(config=config.to_dict(), config_hash=config_hash)
    records: list[EvalRecord] = []
    for status, record in results:
        ledger.cells.append(status)
        if record is not None:
            records.append(record)
    records.sort(key=lambda r: (r.image_id, r.method.value, r.recolor, r.lighting))

    _atomic_write(out_dir / "records.csv", records_to_csv(records, config_hash))
    _atomic_write(out_dir / "ledger.json", ledger.to_json() + "\n")
    label_lines = [f"# config_hash={config_hash}", "image_id,class,resolution"]
    for image_id in sorted(labels):
        label = labels[image_id]
        label_lines.append(f"{image_id},{label.ita_class.name},{label.resolution}")
    _atomic_write(out_dir / "labels.csv", "\n".join(label_lines) + "\n")
    return records, ledger, labels


def read_labels_csv(path) -> dict[str, GroundTruthLabel]:
    from skinbench.colorimetry import ItaClass

    labels: dict[str, GroundTruthLabel] = {}
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    for line in lines:
        if not line or line.startswith("#") or line.startswith("image_id"):
            continue
        image_id, cls_name, resolution = line.split(",")
        labels[image_id] = GroundTruthLabel(image_id, ItaClass[cls_name], resolution)
    return labels
