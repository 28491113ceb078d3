"""EvalRecord serialization: the records CSV and the per-cell cache JSON.

The CSV starts with a `# config_hash=...` comment line; floats are written
with %.12g so regenerated files are byte-identical for identical runs.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

from skinbench.analysis import EvalRecord
from skinbench.colorimetry import ItaClass, SrgbColor
from skinbench.errors import ReportError
from skinbench.extraction import ExtractionMethod, SkinEstimate

_COLUMNS = (
    "image_id",
    "method",
    "recolor",
    "lighting",
    "ref_srgb_r",
    "ref_srgb_g",
    "ref_srgb_b",
    "ref_lab_l",
    "ref_lab_a",
    "ref_lab_b",
    "ref_ita",
    "ref_class",
    "ref_samples",
    "ref_chroma_fallback",
    "rend_srgb_r",
    "rend_srgb_g",
    "rend_srgb_b",
    "rend_lab_l",
    "rend_lab_a",
    "rend_lab_b",
    "rend_ita",
    "rend_class",
    "rend_samples",
    "delta_e",
    "ita_error",
)


def _f(x: float) -> str:
    return "%.12g" % float(x)


def estimate_to_dict(est: SkinEstimate) -> dict:
    return {
        "method": est.method.value,
        "mean": [est.mean.r, est.mean.g, est.mean.b],
        "samples": est.sample_count,
        "chroma_fallback": est.used_chroma_fallback,
    }


def estimate_from_dict(data: dict) -> SkinEstimate:
    return SkinEstimate.from_mean(
        ExtractionMethod(data["method"]),
        SrgbColor(*data["mean"]),
        int(data["samples"]),
        bool(data.get("chroma_fallback", False)),
    )


def record_to_dict(rec: EvalRecord) -> dict:
    return {
        "image_id": rec.image_id,
        "method": rec.method.value,
        "recolor": rec.recolor,
        "lighting": rec.lighting,
        "reference": estimate_to_dict(rec.reference),
        "rendered": estimate_to_dict(rec.rendered),
    }


def record_from_dict(data: dict) -> EvalRecord:
    return EvalRecord.from_estimates(
        image_id=data["image_id"],
        method=ExtractionMethod(data["method"]),
        recolor=data["recolor"],
        lighting=data["lighting"],
        reference=estimate_from_dict(data["reference"]),
        rendered=estimate_from_dict(data["rendered"]),
    )


def records_to_csv(records: list[EvalRecord], config_hash: str) -> str:
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_COLUMNS)
    for rec in records:
        writer.writerow(
            [
                rec.image_id,
                rec.method.value,
                rec.recolor,
                rec.lighting,
                _f(rec.reference.mean.r),
                _f(rec.reference.mean.g),
                _f(rec.reference.mean.b),
                _f(rec.reference.lab.L),
                _f(rec.reference.lab.a),
                _f(rec.reference.lab.b),
                _f(rec.reference.ita),
                rec.reference_class.name,
                rec.reference.sample_count,
                int(rec.reference.used_chroma_fallback),
                _f(rec.rendered.mean.r),
                _f(rec.rendered.mean.g),
                _f(rec.rendered.mean.b),
                _f(rec.rendered.lab.L),
                _f(rec.rendered.lab.a),
                _f(rec.rendered.lab.b),
                _f(rec.rendered.ita),
                rec.rendered_class.name,
                rec.rendered.sample_count,
                _f(rec.delta_e),
                _f(rec.ita_error),
            ]
        )
    return buf.getvalue()


@dataclass(frozen=True)
class RecordRow:
    """Lightweight row read back from records.csv (reports work off this)."""

    image_id: str
    method: str
    recolor: str
    lighting: str
    reference_ita: float
    reference_class: ItaClass
    rendered_ita: float
    rendered_class: ItaClass
    delta_e: float
    ita_error: float
    used_chroma_fallback: bool


def read_records_csv(path) -> tuple[list[RecordRow], str]:
    path = Path(path)
    if not path.is_file():
        raise ReportError(f"records file not found: {path}")
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    config_hash = ""
    if lines and lines[0].startswith("#"):
        head = lines.pop(0)
        if "config_hash=" in head:
            config_hash = head.split("config_hash=", 1)[1].strip()
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    rows: list[RecordRow] = []
    for raw in reader:
        rows.append(
            RecordRow(
                image_id=raw["image_id"],
                method=raw["method"],
                recolor=raw["recolor"],
                lighting=raw["lighting"],
                reference_ita=float(raw["ref_ita"]),
                reference_class=ItaClass[raw["ref_class"]],
                rendered_ita=float(raw["rend_ita"]),
                rendered_class=ItaClass[raw["rend_class"]],
                delta_e=float(raw["delta_e"]),
                ita_error=float(raw["ita_error"]),
                used_chroma_fallback=raw["ref_chroma_fallback"] == "1",
            )
        )
    if not rows:
        raise ReportError(f"no records in {path}")
    return rows, config_hash
