"""Manifest ingestion: the table of images the benchmark runs over.

CSV columns: id, photo, albedo, landmarks, sh, face_x, face_y, face_w,
face_h (albedo/landmarks/sh and the face box are optional; empty cells mean
absent). JSON is a list of row objects with the same keys, the face box as
a 4-element array. Paths are resolved relative to the manifest file.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

from skinbench.errors import ManifestError
from skinbench.face_detect import FaceBox

_CSV_FIELDS = (
    "id",
    "photo",
    "albedo",
    "landmarks",
    "sh",
    "face_x",
    "face_y",
    "face_w",
    "face_h",
)


@dataclass(frozen=True)
class ManifestRow:
    image_id: str
    photo: Path
    albedo: Path | None = None
    landmarks: Path | None = None
    sh: Path | None = None
    face_box: FaceBox | None = None


@dataclass(frozen=True)
class Manifest:
    rows: tuple[ManifestRow, ...]
    base_dir: Path

    def __len__(self) -> int:
        return len(self.rows)


def _resolve(base: Path, value: str | None, row_num: int, field: str) -> Path | None:
    if value is None or str(value).strip() == "":
        return None
    path = (base / str(value)).resolve()
    if not path.is_file():
        raise ManifestError(f"row {row_num}: {field} file not found: {value}")
    return path


def _face_box(raw: dict, row_num: int) -> FaceBox | None:
    vals = [str(raw.get(k, "") or "").strip() for k in ("face_x", "face_y", "face_w", "face_h")]
    if all(v == "" for v in vals):
        return None
    if any(v == "" for v in vals):
        raise ManifestError(f"row {row_num}: face box needs all of face_x/y/w/h")
    try:
        x, y, w, h = (int(v) for v in vals)
    except ValueError as exc:
        raise ManifestError(f"row {row_num}: face box fields must be integers") from exc
    if w <= 0 or h <= 0:
        raise ManifestError(f"row {row_num}: face box must have positive size")
    return FaceBox(x, y, w, h)


def _row_from_dict(raw: dict, row_num: int, base: Path) -> ManifestRow:
    image_id = str(raw.get("id", "") or "").strip()
    if not image_id:
        raise ManifestError(f"row {row_num}: missing id")
    photo = _resolve(base, raw.get("photo"), row_num, "photo")
    if photo is None:
        raise ManifestError(f"row {row_num}: missing photo path")
    if isinstance(raw.get("face_box"), (list, tuple)):
        fb = raw["face_box"]
        raw = dict(raw)
        raw.update({"face_x": fb[0], "face_y": fb[1], "face_w": fb[2], "face_h": fb[3]})
    return ManifestRow(
        image_id=image_id,
        photo=photo,
        albedo=_resolve(base, raw.get("albedo"), row_num, "albedo"),
        landmarks=_resolve(base, raw.get("landmarks"), row_num, "landmarks"),
        sh=_resolve(base, raw.get("sh"), row_num, "sh"),
        face_box=_face_box(raw, row_num),
    )


def load_manifest(path) -> Manifest:
    """Load and validate a CSV or JSON manifest."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    base = path.parent
    rows: list[ManifestRow] = []
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ManifestError(f"bad JSON manifest: {exc}") from exc
        if not isinstance(data, list):
            raise ManifestError("JSON manifest must be a list of row objects")
        for i, raw in enumerate(data, start=1):
            rows.append(_row_from_dict(raw, i, base))
    else:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "id" not in reader.fieldnames:
                raise ManifestError("CSV manifest needs a header with an 'id' column")
            for i, raw in enumerate(reader, start=2):  # header is line 1
                rows.append(_row_from_dict(raw, i, base))

    if not rows:
        raise ManifestError("manifest has no rows")
    seen: dict[str, int] = {}
    for i, row in enumerate(rows):
        if row.image_id in seen:
            raise ManifestError(
                f"duplicate id {row.image_id!r} (rows {seen[row.image_id] + 1} and {i + 1})"
            )
        seen[row.image_id] = i
    return Manifest(tuple(rows), base)


def write_manifest_csv(rows: list[dict], path) -> None:
    """Write manifest rows (dicts with _CSV_FIELDS keys) as CSV."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(_CSV_FIELDS), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in _CSV_FIELDS})
