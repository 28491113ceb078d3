"""Self-contained Viola-Jones style face detection.

Parses the de-facto standard boosted Haar cascade XML interchange format
(both the old "opencv-haar-classifier" tree schema and the newer flat node
encoding), evaluates the stump stages over an integral image with per-window
variance normalization, and groups raw multi-scale hits into face boxes.

Evaluation convention (the one the stock cascades were trained for): feature
sums are scaled by the inverse area of an inner window rect inset by
round(scale), stump comparisons are `value < threshold * sigma`, and the
first rect's weight is recomputed per scale so the weighted rect areas sum
to zero after integer rounding.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Sequence

import numpy as np

from skinbench.errors import CascadeError

_DEFAULT_CASCADE_NAME = "haarcascade_frontalface_default.xml"


@dataclass(frozen=True)
class HaarRect:
    x: int
    y: int
    w: int
    h: int
    weight: float


@dataclass(frozen=True)
class HaarFeature:
    """2-3 weighted rects in base-window units; weights are file-defined."""

    rects: tuple[HaarRect, ...]
    tilted: bool = False


@dataclass(frozen=True)
class WeakStump:
    feature: int
    threshold: float
    left_val: float
    right_val: float


@dataclass(frozen=True)
class CascadeStage:
    threshold: float
    stumps: tuple[WeakStump, ...]


@dataclass(frozen=True)
class Cascade:
    width: int
    height: int
    stages: tuple[CascadeStage, ...]
    features: tuple[HaarFeature, ...]

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def has_tilted(self) -> bool:
        return any(f.tilted for f in self.features)


@dataclass(frozen=True)
class FaceBox:
    x: int
    y: int
    w: int
    h: int

    @property
    def area(self) -> int:
        return self.w * self.h

    def iou(self, other: "FaceBox") -> float:
        ix = max(self.x, other.x)
        iy = max(self.y, other.y)
        ix2 = min(self.x + self.w, other.x + other.w)
        iy2 = min(self.y + self.h, other.y + other.h)
        inter = max(0, ix2 - ix) * max(0, iy2 - iy)
        if inter == 0:
            return 0.0
        return inter / float(self.area + other.area - inter)


@dataclass(frozen=True)
class DetectParams:
    scale_factor: float = 1.1
    min_size: int = 24
    step: int = 1
    min_neighbors: int = 3
    group_iou: float = 0.3
    # Windows with variance below this fraction of the squared 8-bit dynamic
    # range are rejected before stage evaluation.
    variance_floor: float = 1e-6

    def __post_init__(self) -> None:
        if self.scale_factor <= 1.0:
            raise ValueError("scale_factor must be > 1")
        if self.step < 1:
            raise ValueError("step must be >= 1")


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


# ---------------------------------------------------------------------------
# Cascade XML parsing


def _parse_rect_line(text: str) -> HaarRect:
    toks = text.split()
    if len(toks) != 5:
        raise CascadeError(f"rect entry must have 5 fields, got {text!r}")
    vals = [float(t) for t in toks]
    coords = vals[:4]
    if any(c != int(c) for c in coords):
        raise CascadeError(f"rect coordinates must be integers: {text!r}")
    x, y, w, h = (int(c) for c in coords)
    return HaarRect(x, y, w, h, vals[4])


def _req(el: ET.Element, tag: str) -> ET.Element:
    child = el.find(tag)
    if child is None or child.text is None:
        raise CascadeError(f"cascade XML missing <{tag}> under <{el.tag}>")
    return child


def _validate(cascade: Cascade) -> Cascade:
    if cascade.n_stages < 1:
        raise CascadeError("cascade has no stages")
    if cascade.width < 1 or cascade.height < 1:
        raise CascadeError("cascade window size must be positive")
    for fi, feat in enumerate(cascade.features):
        if not 2 <= len(feat.rects) <= 3:
            raise CascadeError(f"feature {fi} has {len(feat.rects)} rects (need 2-3)")
        for r in feat.rects:
            if r.w < 1 or r.h < 1 or r.x < 0 or r.y < 0:
                raise CascadeError(f"feature {fi} rect degenerate: {r}")
            if r.x + r.w > cascade.width or r.y + r.h > cascade.height:
                raise CascadeError(f"feature {fi} rect outside base window: {r}")
    for si, stage in enumerate(cascade.stages):
        if not stage.stumps:
            raise CascadeError(f"stage {si} has no weak classifiers")
        for stump in stage.stumps:
            if not 0 <= stump.feature < cascade.n_features:
                raise CascadeError(
                    f"stage {si} references feature {stump.feature} out of range"
                )
    return cascade


def _parse_old_format(root_el: ET.Element) -> Cascade:
    size = _req(root_el, "size").text.split()
    width, height = int(size[0]), int(size[1])
    features: list[HaarFeature] = []
    stages: list[CascadeStage] = []
    for stage_el in _req(root_el, "stages"):
        stumps: list[WeakStump] = []
        for tree_el in _req(stage_el, "trees"):
            nodes = list(tree_el)
            if len(nodes) != 1:
                raise CascadeError(
                    f"unsupported: multi-node tree with {len(nodes)} nodes "
                    "(only stump classifiers are supported)"
                )
            node = nodes[0]
            if node.find("left_node") is not None or node.find("right_node") is not None:
                raise CascadeError("unsupported: tree node with child nodes")
            feat_el = _req(node, "feature")
            rects = tuple(
                _parse_rect_line(r.text or "") for r in _req(feat_el, "rects")
            )
            tilted = int(_req(feat_el, "tilted").text) != 0
            features.append(HaarFeature(rects, tilted))
            stumps.append(
                WeakStump(
                    feature=len(features) - 1,
                    threshold=float(_req(node, "threshold").text),
                    left_val=float(_req(node, "left_val").text),
                    right_val=float(_req(node, "right_val").text),
                )
            )
        stages.append(
            CascadeStage(float(_req(stage_el, "stage_threshold").text), tuple(stumps))
        )
    return _validate(Cascade(width, height, tuple(stages), tuple(features)))


def _parse_new_format(cascade_el: ET.Element) -> Cascade:
    feature_type = _req(cascade_el, "featureType").text.strip()
    if feature_type != "HAAR":
        raise CascadeError(f"unsupported feature type: {feature_type!r}")
    width = int(_req(cascade_el, "width").text)
    height = int(_req(cascade_el, "height").text)

    stages: list[CascadeStage] = []
    for stage_el in _req(cascade_el, "stages"):
        stumps: list[WeakStump] = []
        for weak_el in _req(stage_el, "weakClassifiers"):
            toks = _req(weak_el, "internalNodes").text.split()
            if len(toks) != 4:
                raise CascadeError(
                    "unsupported: weak classifier with "
                    f"{len(toks) // 4} internal nodes (stumps only)"
                )
            left_idx, right_idx = int(toks[0]), int(toks[1])
            if (left_idx, right_idx) != (0, -1):
                raise CascadeError(
                    f"unsupported: non-stump node layout {toks[:2]}"
                )
            leaves = [float(t) for t in _req(weak_el, "leafValues").text.split()]
            if len(leaves) != 2:
                raise CascadeError("stump must have exactly 2 leaf values")
            stumps.append(
                WeakStump(int(toks[2]), float(toks[3]), leaves[0], leaves[1])
            )
        stages.append(
            CascadeStage(float(_req(stage_el, "stageThreshold").text), tuple(stumps))
        )

    features: list[HaarFeature] = []
    for feat_el in _req(cascade_el, "features"):
        rects = tuple(_parse_rect_line(r.text or "") for r in _req(feat_el, "rects"))
        tilted_el = feat_el.find("tilted")
        tilted = tilted_el is not None and int(tilted_el.text) != 0
        features.append(HaarFeature(rects, tilted))

    return _validate(Cascade(width, height, tuple(stages), tuple(features)))


def parse_cascade(data: bytes | str) -> Cascade:
    """Parse cascade XML (old tree schema or new flat encoding) losslessly."""
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    if not data.strip():
        raise CascadeError("empty cascade file")
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        line, col = exc.position
        raise CascadeError(
            f"malformed cascade XML at line {line}, column {col}: {exc.msg}"
        ) from exc
    if root.tag != "opencv_storage":
        raise CascadeError(f"unexpected root element <{root.tag}>")
    for child in root:
        type_id = child.get("type_id", "")
        if type_id == "opencv-haar-classifier":
            return _parse_old_format(child)
        if type_id == "opencv-cascade-classifier":
            return _parse_new_format(child)
    raise CascadeError("no cascade element with a recognized type_id")


def cascade_to_xml(cascade: Cascade) -> bytes:
    """Dump a cascade to the flat node encoding (debug/round-trip format)."""
    lines = [
        '<?xml version="1.0"?>',
        "<opencv_storage>",
        '<cascade type_id="opencv-cascade-classifier">',
        "  <stageType>BOOST</stageType>",
        "  <featureType>HAAR</featureType>",
        f"  <height>{cascade.height}</height>",
        f"  <width>{cascade.width}</width>",
        f"  <stageNum>{cascade.n_stages}</stageNum>",
        "  <stages>",
    ]
    for stage in cascade.stages:
        lines += [
            "    <_>",
            f"      <maxWeakCount>{len(stage.stumps)}</maxWeakCount>",
            f"      <stageThreshold>{stage.threshold!r}</stageThreshold>",
            "      <weakClassifiers>",
        ]
        for s in stage.stumps:
            lines += [
                "        <_>",
                f"          <internalNodes>0 -1 {s.feature} {s.threshold!r}</internalNodes>",
                f"          <leafValues>{s.left_val!r} {s.right_val!r}</leafValues>",
                "        </_>",
            ]
        lines += ["      </weakClassifiers>", "    </_>"]
    lines.append("  </stages>")
    lines.append("  <features>")
    for feat in cascade.features:
        lines.append("    <_>")
        lines.append("      <rects>")
        for r in feat.rects:
            lines.append(f"        <_>{r.x} {r.y} {r.w} {r.h} {r.weight!r}</_>")
        lines.append("      </rects>")
        lines.append(f"      <tilted>{int(feat.tilted)}</tilted>")
        lines.append("    </_>")
    lines += ["  </features>", "</cascade>", "</opencv_storage>", ""]
    return "\n".join(lines).encode("utf-8")


def load_cascade(path) -> Cascade:
    with open(path, "rb") as fh:
        return parse_cascade(fh.read())


def default_cascade_path() -> str:
    """Path of the bundled stock frontal-face cascade."""
    return str(resources.files("skinbench").joinpath(f"data/{_DEFAULT_CASCADE_NAME}"))


@lru_cache(maxsize=1)
def default_cascade() -> Cascade:
    return load_cascade(default_cascade_path())


# ---------------------------------------------------------------------------
# Integral images


class IntegralImage:
    """Summed-area tables (plain and squared) over an 8-bit luma image."""

    def __init__(self, gray: np.ndarray):
        g = np.asarray(gray)
        if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
            raise ValueError("integral image needs a 2-D image with W, H >= 1")
        g = g.astype(np.int64)
        h, w = g.shape
        self.height = h
        self.width = w
        self.sum = np.zeros((h + 1, w + 1), dtype=np.int64)
        self.sum[1:, 1:] = g.cumsum(axis=0).cumsum(axis=1)
        self.sq = np.zeros((h + 1, w + 1), dtype=np.int64)
        self.sq[1:, 1:] = (g * g).cumsum(axis=0).cumsum(axis=1)

    def rect_sum(self, x: int, y: int, w: int, h: int) -> int:
        s = self.sum
        return int(s[y + h, x + w] - s[y, x + w] - s[y + h, x] + s[y, x])

    def rect_sums(
        self, xs: np.ndarray, ys: np.ndarray, x: int, y: int, w: int, h: int
    ) -> np.ndarray:
        """Rect sums for one rect offset over many window origins."""
        s = self.sum
        return (
            s[ys + (y + h), xs + (x + w)]
            - s[ys + y, xs + (x + w)]
            - s[ys + (y + h), xs + x]
            + s[ys + y, xs + x]
        )

    def sq_rect_sums(
        self, xs: np.ndarray, ys: np.ndarray, x: int, y: int, w: int, h: int
    ) -> np.ndarray:
        s = self.sq
        return (
            s[ys + (y + h), xs + (x + w)]
            - s[ys + y, xs + (x + w)]
            - s[ys + (y + h), xs + x]
            + s[ys + y, xs + x]
        )


def integral_image(gray: np.ndarray) -> IntegralImage:
    return IntegralImage(gray)


def to_gray_u8(image: np.ndarray) -> np.ndarray:
    """Luma conversion: gamma-encoded 0.299/0.587/0.114 weights, 8-bit out."""
    a = np.asarray(image)
    if a.ndim == 2:
        if a.dtype == np.uint8:
            return a
        g = np.asarray(a, dtype=np.float64)
        if g.max(initial=0.0) <= 1.0:
            g = g * 255.0
    elif a.ndim == 3 and a.shape[-1] == 3:
        rgb = a.astype(np.float64)
        if a.dtype != np.uint8:
            rgb = rgb * 255.0
        g = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    else:
        raise ValueError(f"cannot convert shape {a.shape} to grayscale")
    return np.clip(np.floor(g + 0.5), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# Multi-scale scan


@dataclass
class _ScaledStage:
    threshold: float
    # (n_stumps, 3) rect geometry/weights; unused third-rect slots have
    # weight 0 and zero geometry.
    rx: np.ndarray
    ry: np.ndarray
    rw: np.ndarray
    rh: np.ndarray
    weight: np.ndarray
    node_thr: np.ndarray
    left: np.ndarray
    right: np.ndarray


@dataclass
class _PreparedScale:
    scale: float
    win_w: int
    win_h: int
    inner: tuple[int, int, int, int]
    inv_area: float
    stages: list[_ScaledStage] = field(default_factory=list)


def _prepare_scale(cascade: Cascade, scale: float) -> _PreparedScale:
    if cascade.has_tilted:
        raise CascadeError("unsupported: cascade uses tilted features")
    win_w = _round_half_up(cascade.width * scale)
    win_h = _round_half_up(cascade.height * scale)
    inset = _round_half_up(scale)
    inner = (
        inset,
        inset,
        _round_half_up((cascade.width - 2) * scale),
        _round_half_up((cascade.height - 2) * scale),
    )
    inv_area = 1.0 / (inner[2] * inner[3])

    # Scale every feature once, recomputing the first rect's weight so the
    # weighted rect areas cancel exactly at the rounded geometry.
    n_feat = cascade.n_features
    frx = np.zeros((n_feat, 3), dtype=np.int64)
    fry = np.zeros((n_feat, 3), dtype=np.int64)
    frw = np.zeros((n_feat, 3), dtype=np.int64)
    frh = np.zeros((n_feat, 3), dtype=np.int64)
    fwt = np.zeros((n_feat, 3), dtype=np.float64)
    for fi, feat in enumerate(cascade.features):
        area0 = 0.0
        sum0 = 0.0
        for k, r in enumerate(feat.rects):
            x = _round_half_up(r.x * scale)
            y = _round_half_up(r.y * scale)
            w = _round_half_up(r.w * scale)
            h = _round_half_up(r.h * scale)
            # Rounding may poke past the scaled window; clamp, the rect-0
            # weight recomputation below rebalances the areas.
            x = min(x, win_w - 1)
            y = min(y, win_h - 1)
            w = max(1, min(w, win_w - x))
            h = max(1, min(h, win_h - y))
            frx[fi, k], fry[fi, k], frw[fi, k], frh[fi, k] = x, y, w, h
            if k == 0:
                area0 = float(w * h)
            else:
                wt = r.weight * inv_area
                fwt[fi, k] = wt
                sum0 += wt * w * h
        fwt[fi, 0] = -sum0 / area0

    prep = _PreparedScale(scale, win_w, win_h, inner, inv_area)
    for stage in cascade.stages:
        idx = np.array([s.feature for s in stage.stumps])
        prep.stages.append(
            _ScaledStage(
                threshold=stage.threshold,
                rx=frx[idx],
                ry=fry[idx],
                rw=frw[idx],
                rh=frh[idx],
                weight=fwt[idx],
                node_thr=np.array([s.threshold for s in stage.stumps]),
                left=np.array([s.left_val for s in stage.stumps]),
                right=np.array([s.right_val for s in stage.stumps]),
            )
        )
    return prep


def _eval_windows(
    ii: IntegralImage,
    prep: _PreparedScale,
    xs: np.ndarray,
    ys: np.ndarray,
    variance_floor: float,
) -> np.ndarray:
    """Staged evaluation of window origins (xs, ys); returns an accept mask."""
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    n = xs.shape[0]
    accepted = np.zeros(n, dtype=bool)
    if n == 0:
        return accepted

    ix, iy, iw, ih = prep.inner
    area_sum = ii.rect_sums(xs, ys, ix, iy, iw, ih).astype(np.float64)
    area_sq = ii.sq_rect_sums(xs, ys, ix, iy, iw, ih).astype(np.float64)
    mean = area_sum * prep.inv_area
    var = area_sq * prep.inv_area - mean * mean
    alive = var >= variance_floor * 255.0**2
    if not alive.any():
        return accepted

    alive_idx = np.nonzero(alive)[0]
    sigma = np.sqrt(var[alive_idx])
    ax = xs[alive_idx]
    ay = ys[alive_idx]

    for stage in prep.stages:
        total = np.zeros(ax.shape[0], dtype=np.float64)
        for j in range(stage.node_thr.shape[0]):
            value = np.zeros(ax.shape[0], dtype=np.float64)
            for k in range(3):
                w = stage.weight[j, k]
                if w == 0.0:
                    continue
                value += w * ii.rect_sums(
                    ax,
                    ay,
                    int(stage.rx[j, k]),
                    int(stage.ry[j, k]),
                    int(stage.rw[j, k]),
                    int(stage.rh[j, k]),
                )
            total += np.where(value < stage.node_thr[j] * sigma, stage.left[j], stage.right[j])
        passed = total >= stage.threshold
        if not passed.any():
            return accepted
        alive_idx = alive_idx[passed]
        sigma = sigma[passed]
        ax = ax[passed]
        ay = ay[passed]

    accepted[alive_idx] = True
    return accepted


def evaluate_window(
    ii: IntegralImage,
    cascade: Cascade,
    x: int,
    y: int,
    scale: float = 1.0,
    variance_floor: float = DetectParams.variance_floor,
) -> bool:
    """Run the full staged evaluation on a single window origin."""
    prep = _prepare_scale(cascade, scale)
    if x < 0 or y < 0 or x + prep.win_w > ii.width or y + prep.win_h > ii.height:
        raise ValueError("window outside image bounds")
    mask = _eval_windows(ii, prep, np.array([x]), np.array([y]), variance_floor)
    return bool(mask[0])


def _group_hits(
    hits: list[FaceBox], min_neighbors: int, iou_threshold: float
) -> list[FaceBox]:
    if min_neighbors <= 0:
        return sorted(hits, key=lambda b: (-b.area, b.x, b.y))
    n = len(hits)
    if n == 0:
        return []
    x1 = np.array([b.x for b in hits], dtype=np.float64)
    y1 = np.array([b.y for b in hits], dtype=np.float64)
    x2 = x1 + np.array([b.w for b in hits], dtype=np.float64)
    y2 = y1 + np.array([b.h for b in hits], dtype=np.float64)
    areas = (x2 - x1) * (y2 - y1)

    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n - 1):
        iw = np.minimum(x2[i], x2[i + 1 :]) - np.maximum(x1[i], x1[i + 1 :])
        ih = np.minimum(y2[i], y2[i + 1 :]) - np.maximum(y1[i], y1[i + 1 :])
        inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
        iou = inter / (areas[i] + areas[i + 1 :] - inter)
        for j in np.nonzero(iou >= iou_threshold)[0]:
            ri, rj = find(i), find(int(j) + i + 1)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)

    groups: dict[int, list[FaceBox]] = {}
    for i, box in enumerate(hits):
        groups.setdefault(find(i), []).append(box)

    out = []
    for members in groups.values():
        if len(members) < min_neighbors:
            continue
        m = len(members)
        out.append(
            FaceBox(
                _round_half_up(sum(b.x for b in members) / m),
                _round_half_up(sum(b.y for b in members) / m),
                _round_half_up(sum(b.w for b in members) / m),
                _round_half_up(sum(b.h for b in members) / m),
            )
        )
    return sorted(out, key=lambda b: (-b.area, b.x, b.y))


def detect_faces(
    image: np.ndarray, cascade: Cascade, params: DetectParams | None = None
) -> list[FaceBox]:
    """Multi-scale sliding-window detection; returns grouped face boxes.

    Deterministic: ordering is by area (descending), then x, then y; no
    randomness anywhere in the scan.
    """
    params = params or DetectParams()
    gray = to_gray_u8(image)
    ii = IntegralImage(gray)
    h, w = gray.shape

    hits: list[FaceBox] = []
    scale = max(1.0, params.min_size / cascade.width)
    while True:
        prep = _prepare_scale(cascade, scale)
        if prep.win_w > w or prep.win_h > h:
            break
        xs0 = np.arange(0, w - prep.win_w + 1, params.step, dtype=np.int64)
        ys0 = np.arange(0, h - prep.win_h + 1, params.step, dtype=np.int64)
        gx, gy = np.meshgrid(xs0, ys0)
        gx = gx.ravel()
        gy = gy.ravel()
        accept = _eval_windows(ii, prep, gx, gy, params.variance_floor)
        for i in np.nonzero(accept)[0]:
            hits.append(FaceBox(int(gx[i]), int(gy[i]), prep.win_w, prep.win_h))
        scale *= params.scale_factor

    return _group_hits(hits, params.min_neighbors, params.group_iou)


def select_primary_face(boxes: Sequence[FaceBox]) -> FaceBox | None:
    """Largest-area box; ties broken by smallest (x, y). None when empty."""
    if not boxes:
        return None
    return min(boxes, key=lambda b: (-b.area, b.x, b.y))
