"""Report bundle: median tables, confusion matrix, box plots, stats, HTML index.

Everything is derived from records.csv (plus labels.csv for the confusion
matrix) and regenerates byte-identically: groups are sorted, floats use
fixed formats, and no timestamps are embedded.
"""

from __future__ import annotations

import json
from pathlib import Path

from skinbench.analysis import (
    ConfusionMatrix,
    confusion_matrix,
    dunn_posthoc,
    kruskal_wallis,
    summarize_values,
)
from skinbench.colorimetry import ItaClass
from skinbench.pipeline.records import RecordRow, read_records_csv
from skinbench.pipeline.runner import read_labels_csv
from skinbench.pipeline.svg import boxplot_svg, heatmap_svg

_CLASS_NAMES = [c.name for c in ItaClass]


def _group(rows: list[RecordRow], key) -> dict[str, list[float]]:
    out: dict[str, list[float]] = {}
    for row in rows:
        out.setdefault(key(row), [])
    return out


def _grouped_values(rows, key, value) -> dict[str, list[float]]:
    groups: dict[str, list[float]] = {}
    for row in rows:
        groups.setdefault(key(row), []).append(getattr(row, value))
    return dict(sorted(groups.items()))


def _median_table_csv(groups: dict[str, list[float]], key_name: str, config_hash: str) -> str:
    lines = [f"# config_hash={config_hash}", f"{key_name},count,median,q1,q3"]
    for name, values in groups.items():
        s = summarize_values(values)
        lines.append(f"{name},{s.count},{s.median:.6g},{s.q1:.6g},{s.q3:.6g}")
    return "\n".join(lines) + "\n"


def _box_stats(groups: dict[str, list[float]]):
    labels, stats = [], []
    for name, values in groups.items():
        s = summarize_values(values)
        labels.append(name)
        stats.append((min(values), s.q1, s.median, s.q3, max(values)))
    return labels, stats


def _confusion_csv(cm: ConfusionMatrix, config_hash: str) -> str:
    lines = [f"# config_hash={config_hash}", "gt\\rendered," + ",".join(_CLASS_NAMES)]
    for i, name in enumerate(_CLASS_NAMES):
        lines.append(name + "," + ",".join(str(int(v)) for v in cm.counts[i]))
    return "\n".join(lines) + "\n"


def _stats_battery(rows, label_class) -> list[dict]:
    """Kruskal-Wallis + Dunn over the report's standard groupings."""
    batteries = [
        ("delta_e ~ method", "delta_e", lambda r: r.method),
        ("delta_e ~ lighting", "delta_e", lambda r: r.lighting),
        ("ita_error ~ method", "ita_error", lambda r: r.method),
    ]
    if label_class is not None:
        batteries.append(
            ("ita_error ~ class", "ita_error", lambda r: label_class(r))
        )
    # Interaction analogue: omnibus test over composite cells.
    batteries.append(
        (
            "delta_e ~ kw_cells(method*lighting)",
            "delta_e",
            lambda r: f"{r.method}|{r.lighting}",
        )
    )
    out = []
    for name, value, key in batteries:
        groups = _grouped_values(rows, key, value)
        if len(groups) < 2:
            continue
        ordered = list(groups)
        kw = kruskal_wallis(list(groups.values()), name=name)
        dunn = dunn_posthoc(list(groups.values()), correction="bonferroni")
        entry = kw.to_dict()
        entry["groups"] = ordered
        entry["posthoc"] = [
            {
                "group_a": ordered[c.group_a],
                "group_b": ordered[c.group_b],
                "z": c.z,
                "p_raw": c.p_raw,
                "p_adjusted": c.p_adjusted,
            }
            for c in dunn.posthoc
        ]
        entry["correction"] = dunn.correction
        out.append(entry)
    return out


def generate_report(records_path, out_dir, labels_path=None) -> Path:
    """Build the report bundle; returns the path of the HTML index."""
    records_path = Path(records_path)
    rows, config_hash = read_records_csv(records_path)
    out_dir = Path(out_dir)
    reports = out_dir / "reports"
    reports.mkdir(parents=True, exist_ok=True)

    if labels_path is None:
        candidate = records_path.parent / "labels.csv"
        labels_path = candidate if candidate.is_file() else None
    labels = read_labels_csv(labels_path) if labels_path else {}

    artifacts: list[tuple[str, str]] = []

    def emit(name: str, content: str) -> None:
        (reports / name).write_text(content, encoding="utf-8")
        artifacts.append((name, name))

    # Median tables.
    by_method = _grouped_values(rows, lambda r: r.method, "delta_e")
    by_lighting = _grouped_values(rows, lambda r: r.lighting, "delta_e")
    emit("median_delta_e_by_method.csv", _median_table_csv(by_method, "method", config_hash))
    emit(
        "median_delta_e_by_lighting.csv",
        _median_table_csv(by_lighting, "lighting", config_hash),
    )
    ita_by_method = _grouped_values(rows, lambda r: r.method, "ita_error")
    emit(
        "median_ita_error_by_method.csv",
        _median_table_csv(ita_by_method, "method", config_hash),
    )

    labeled_rows = [r for r in rows if r.image_id in labels]
    excluded = len(rows) - len(labeled_rows)
    label_class = None
    if labeled_rows:
        label_class = lambda r: labels[r.image_id].ita_class.name  # noqa: E731
        ita_by_class = _grouped_values(labeled_rows, label_class, "ita_error")
        emit(
            "median_ita_error_by_class.csv",
            _median_table_csv(ita_by_class, "class", config_hash),
        )
        cm = confusion_matrix(labeled_rows, labels)
        emit("confusion_matrix.csv", _confusion_csv(cm, config_hash))
        emit(
            "confusion_matrix.svg",
            heatmap_svg(
                cm.counts.tolist(),
                _CLASS_NAMES,
                _CLASS_NAMES,
                "Tone class confusion (ground truth vs rendered)",
                config_hash,
            ),
        )

    # Box plots.
    for name, groups, title, ylabel in [
        ("box_delta_e_by_method.svg", by_method, "Delta E by method", "delta E"),
        ("box_delta_e_by_lighting.svg", by_lighting, "Delta E by lighting", "delta E"),
        (
            "box_ita_error_by_method.svg",
            ita_by_method,
            "Tone angle error by method",
            "degrees",
        ),
    ]:
        labels_list, stats = _box_stats(groups)
        emit(name, boxplot_svg(labels_list, stats, title, ylabel, config_hash))
    if labeled_rows:
        labels_list, stats = _box_stats(
            _grouped_values(labeled_rows, label_class, "ita_error")
        )
        emit(
            "box_ita_error_by_class.svg",
            boxplot_svg(
                labels_list, stats, "Tone angle error by class", "degrees", config_hash
            ),
        )

    stats_entries = _stats_battery(rows if label_class is None else labeled_rows, label_class)
    emit(
        "stats.json",
        json.dumps(
            {"config_hash": config_hash, "tests": stats_entries}, indent=2
        )
        + "\n",
    )
    posthoc_lines = [
        f"# config_hash={config_hash}",
        "test,correction,group_a,group_b,z,p_raw,p_adjusted",
    ]
    for entry in stats_entries:
        for cmp in entry["posthoc"]:
            posthoc_lines.append(
                f"{entry['test']},{entry['correction']},{cmp['group_a']},"
                f"{cmp['group_b']},{cmp['z']:.9g},{cmp['p_raw']:.9g},"
                f"{cmp['p_adjusted']:.9g}"
            )
    emit("posthoc.csv", "\n".join(posthoc_lines) + "\n")

    fallback_count = sum(1 for r in rows if r.used_chroma_fallback)
    html = _index_html(
        config_hash, rows, artifacts, excluded, fallback_count, by_method, by_lighting
    )
    index = reports / "index.html"
    index.write_text(html, encoding="utf-8")
    return index


def _index_html(
    config_hash, rows, artifacts, excluded, fallback_count, by_method, by_lighting
) -> str:
    def table(groups: dict[str, list[float]], key_name: str) -> str:
        cells = [
            "<table><tr><th>%s</th><th>n</th><th>median</th><th>q1</th><th>q3</th></tr>"
            % key_name
        ]
        for name, values in groups.items():
            s = summarize_values(values)
            cells.append(
                f"<tr><td>{name}</td><td>{s.count}</td><td>{s.median:.4g}</td>"
                f"<td>{s.q1:.4g}</td><td>{s.q3:.4g}</td></tr>"
            )
        cells.append("</table>")
        return "".join(cells)

    notes = []
    if fallback_count:
        notes.append(
            f"<p><strong>Note:</strong> {fallback_count} records used the "
            "chroma-gate fallback mask (no landmark file); the gate bounds are "
            "artifact-defined, not sourced.</p>"
        )
    if excluded:
        notes.append(
            f"<p><strong>Note:</strong> {excluded} records excluded from the "
            "confusion matrix and per-class tables (their images have no "
            "ground-truth label: labeling needs all four extraction methods).</p>"
        )
    links = "".join(
        f'<li><a href="{href}">{name}</a></li>' for name, href in artifacts
    )
    return f"""<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<meta name="config-hash" content="{config_hash}">
<title>Skin-tone fidelity report</title>
<style>
body {{ font-family: sans-serif; margin: 2em; max-width: 60em; }}
table {{ border-collapse: collapse; margin: 1em 0; }}
td, th {{ border: 1px solid #999; padding: 0.3em 0.7em; text-align: right; }}
th {{ background: #eee; }}
</style>
</head>
<body>
<h1>Skin-tone fidelity report</h1>
<p>config hash: <code>{config_hash}</code> &middot; records: {len(rows)}</p>
{"".join(notes)}
<h2>Color difference by extraction method</h2>
{table(by_method, "method")}
<h2>Color difference by lighting</h2>
{table(by_lighting, "lighting")}
<h2>Artifacts</h2>
<ul>{links}</ul>
</body>
</html>
"""
