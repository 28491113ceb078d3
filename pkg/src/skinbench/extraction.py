"""Skin-color extraction strategies.

Four methods share two families: cheek-region sampling (mean sRGB over two
geometrically placed squares of a detected face) and masked clustering
(k-means in CIELAB over a face mask, count-weighted mean of the brightest
clusters). The albedo variants run the identical geometry/clustering on an
ingested albedo map instead of the photograph, so differences against the
base variants isolate illumination.

Coordinate convention: landmark files carry image-pixel coordinates, and
pixel (x, y) has its center at exactly (x, y); hull rasterization includes
pixel centers on the hull boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from skinbench.colorimetry import (
    ItaClass,
    LabColor,
    SrgbColor,
    ita_class,
    ita_degrees,
    lab_to_srgb,
    srgb_to_lab,
    srgb_to_lab_image,
)
from skinbench.errors import ExtractionError
from skinbench.face_detect import Cascade, DetectParams, FaceBox, detect_faces, select_primary_face

# Chroma gate for the no-landmarks fallback mask; artifact-defined bounds,
# inclusive on both ends.
CHROMA_GATE_L = (20.0, 95.0)
CHROMA_GATE_A = (2.0, 45.0)
CHROMA_GATE_B = (2.0, 50.0)


class ExtractionMethod(Enum):
    CHEEK = "cheek"
    MASK = "mask"
    CHEEK_ALBEDO = "cheek-albedo"
    MASK_ALBEDO = "mask-albedo"

    @property
    def uses_albedo(self) -> bool:
        return self in (ExtractionMethod.CHEEK_ALBEDO, ExtractionMethod.MASK_ALBEDO)

    @property
    def family(self) -> str:
        """"cheek" (region sampling) or "mask" (masked clustering)."""
        return (
            "cheek"
            if self in (ExtractionMethod.CHEEK, ExtractionMethod.CHEEK_ALBEDO)
            else "mask"
        )


@dataclass(frozen=True)
class RegionSpec:
    """Square sampling region in pixel coordinates."""

    x: int
    y: int
    w: int
    h: int
    side: str = ""

    def __post_init__(self) -> None:
        if self.w != self.h:
            raise ValueError("sampling regions are squares")
        if self.w <= 0:
            raise ValueError("region side must be positive")


@dataclass
class SkinMask:
    mask: np.ndarray
    count: int = field(init=False)

    def __post_init__(self) -> None:
        self.mask = np.asarray(self.mask, dtype=bool)
        self.count = int(self.mask.sum())


@dataclass(frozen=True)
class Landmarks:
    points: tuple[tuple[float, float], ...]

    @classmethod
    def from_text(cls, text: str) -> "Landmarks":
        """Parse the landmark file format: one "x y" pair per line."""
        pts = []
        for ln, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ExtractionError(f"landmark line {ln} is not 'x y': {line!r}")
            pts.append((float(parts[0]), float(parts[1])))
        return cls(tuple(pts))


@dataclass(frozen=True)
class ClusterSummary:
    centroid: LabColor
    count: int


@dataclass(frozen=True)
class SkinEstimate:
    method: ExtractionMethod
    mean: SrgbColor
    lab: LabColor
    ita: float
    ita_class: ItaClass
    sample_count: int
    used_chroma_fallback: bool = False

    @classmethod
    def from_mean(
        cls,
        method: ExtractionMethod,
        mean: SrgbColor,
        sample_count: int,
        used_chroma_fallback: bool = False,
    ) -> "SkinEstimate":
        lab = srgb_to_lab(mean)
        deg = ita_degrees(lab)
        return cls(method, mean, lab, deg, ita_class(deg), sample_count, used_chroma_fallback)


@dataclass
class ExtractionInput:
    """One image's worth of extraction inputs; photo is required."""

    photo: np.ndarray
    albedo: np.ndarray | None = None
    landmarks: Landmarks | None = None
    face_box: FaceBox | None = None

    def __post_init__(self) -> None:
        if self.albedo is not None and self.albedo.shape != self.photo.shape:
            raise ExtractionError(
                f"albedo dimensions {self.albedo.shape} != photo {self.photo.shape}"
            )


@dataclass(frozen=True)
class ExtractionParams:
    roi_width_frac: float = 0.15
    roi_horizontal_offset_frac: float = 0.18
    roi_vertical_offset_frac: float = 0.50
    # "mirror": the right square's RIGHT edge sits at the offset from the
    # face's right boundary (mirror of the left square). "inner": the right
    # square's LEFT edge sits there instead; kept for sensitivity analysis.
    roi_anchor: str = "mirror"
    min_region_side: int = 2
    kmeans_k: int = 5
    kmeans_top_m: int = 3
    kmeans_seed: int = 0


def _round_half_away(v: float) -> int:
    return int(math.floor(v + 0.5)) if v >= 0 else -int(math.floor(-v + 0.5))


def cheek_rois(
    face: FaceBox,
    dims: tuple[int, int],
    params: ExtractionParams | None = None,
) -> tuple[RegionSpec, RegionSpec]:
    """Left/right cheek squares for a face box, clamped into (W, H) bounds.

    Square side is 15% of the face width; the left square's left edge sits
    18% of the face width in from the face's left boundary, mirrored for the
    right square; both tops sit 50% of the face height down.
    """
    params = params or ExtractionParams()
    w_img, h_img = dims
    side = _round_half_away(params.roi_width_frac * face.w)
    if side < max(2, params.min_region_side):
        raise ExtractionError(
            f"face too small: {face.w} px wide gives a {side} px cheek square"
        )
    if side > w_img or side > h_img:
        raise ExtractionError("cheek square larger than image")
    off = _round_half_away(params.roi_horizontal_offset_frac * face.w)
    y = face.y + _round_half_away(params.roi_vertical_offset_frac * face.h)
    left_x = face.x + off
    if params.roi_anchor == "mirror":
        right_x = face.x + face.w - off - side
    elif params.roi_anchor == "inner":
        right_x = face.x + face.w - off
    else:
        raise ValueError(f"unknown roi_anchor {params.roi_anchor!r}")

    def clamp(x: int) -> tuple[int, int]:
        return (
            int(np.clip(x, 0, w_img - side)),
            int(np.clip(y, 0, h_img - side)),
        )

    lx, ly = clamp(left_x)
    rx, ry = clamp(right_x)
    return (
        RegionSpec(lx, ly, side, side, side="left"),
        RegionSpec(rx, ry, side, side, side="right"),
    )


def mean_color(
    image: np.ndarray,
    regions: Sequence[RegionSpec],
    method: ExtractionMethod = ExtractionMethod.CHEEK,
    enforce_min_area: bool = True,
) -> SkinEstimate:
    """Mean sRGB over the union of region pixels (each pixel counted once)."""
    if not regions:
        raise ExtractionError("need at least one sampling region")
    if enforce_min_area:
        for r in regions:
            if r.w * r.h < 4:
                raise ExtractionError(f"region {r} below the 4-pixel floor")
    h, w = image.shape[:2]
    union = np.zeros((h, w), dtype=bool)
    for r in regions:
        if r.x < 0 or r.y < 0 or r.x + r.w > w or r.y + r.h > h:
            raise ExtractionError(f"region {r} outside image bounds")
        union[r.y : r.y + r.h, r.x : r.x + r.w] = True
    count = int(union.sum())
    if count == 0:
        raise ExtractionError("empty region union")
    mean = image[union].mean(axis=0)
    return SkinEstimate.from_mean(
        method, SrgbColor(float(mean[0]), float(mean[1]), float(mean[2])), count
    )


def _convex_hull(points: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) < 3:
        raise ExtractionError("need at least 3 distinct landmark points")

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise ExtractionError("landmarks are collinear; no hull area")
    return hull  # counter-clockwise in (x, y) with y down


def mask_from_landmarks(lm: Landmarks, dims: tuple[int, int]) -> SkinMask:
    """Rasterized convex hull of the landmarks (pixel centers in or on hull)."""
    w, h = dims
    hull = _convex_hull(lm.points)
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    inside = np.ones((h, w), dtype=bool)
    n = len(hull)
    for i in range(n):
        px, py = hull[i]
        qx, qy = hull[(i + 1) % n]
        # CCW hull: interior has non-negative cross product for every edge.
        inside &= (qx - px) * (gy - py) - (qy - py) * (gx - px) >= -1e-9
    if not inside.any():
        raise ExtractionError("landmark hull covers no pixel centers")
    return SkinMask(inside)


def mask_chroma_fallback(image: np.ndarray) -> SkinMask:
    """Skin mask from a fixed CIELAB chroma gate; used when no landmarks exist."""
    lab = srgb_to_lab_image(image)
    L, a, b = lab[..., 0], lab[..., 1], lab[..., 2]
    mask = (
        (L >= CHROMA_GATE_L[0]) & (L <= CHROMA_GATE_L[1])
        & (a >= CHROMA_GATE_A[0]) & (a <= CHROMA_GATE_A[1])
        & (b >= CHROMA_GATE_B[0]) & (b <= CHROMA_GATE_B[1])
    )
    if not mask.any():
        raise ExtractionError("no skin pixels pass the chroma gate")
    return SkinMask(mask)


def _kmeans_lab(
    lab: np.ndarray, k: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Plain Lloyd k-means with k-means++ seeding; returns (centroids, assign).

    Deterministic for a fixed seed; empty clusters are re-seeded from the
    point farthest from its currently assigned centroid.
    """
    rng = np.random.default_rng(seed)
    n = lab.shape[0]
    centroids = np.empty((k, 3), dtype=np.float64)
    centroids[0] = lab[int(rng.integers(n))]
    d2 = ((lab - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            centroids[j:] = centroids[0]
            break
        centroids[j] = lab[int(rng.choice(n, p=d2 / total))]
        d2 = np.minimum(d2, ((lab - centroids[j]) ** 2).sum(axis=1))

    assign = np.zeros(n, dtype=np.int64)
    for _ in range(100):
        dists = ((lab[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = dists.argmin(axis=1)
        moved = 0.0
        new_centroids = centroids.copy()
        for j in range(k):
            members = lab[assign == j]
            if members.shape[0] == 0:
                far = int(dists[np.arange(n), assign].argmax())
                new_centroids[j] = lab[far]
            else:
                new_centroids[j] = members.mean(axis=0)
        moved = float(np.abs(new_centroids - centroids).max())
        centroids = new_centroids
        if moved < 1e-6:
            break
    dists = ((lab[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    assign = dists.argmin(axis=1)
    return centroids, assign


def cluster_summaries(centroids: np.ndarray, assign: np.ndarray) -> list[ClusterSummary]:
    counts = np.bincount(assign, minlength=centroids.shape[0])
    return [
        ClusterSummary(LabColor(*map(float, centroids[j])), int(counts[j]))
        for j in range(centroids.shape[0])
    ]


def cluster_estimate(
    image: np.ndarray,
    mask: SkinMask,
    k: int = 5,
    top_m: int = 3,
    seed: int = 0,
    method: ExtractionMethod = ExtractionMethod.MASK,
    used_chroma_fallback: bool = False,
) -> SkinEstimate:
    """Masked k-means in CIELAB; count-weighted mean of the brightest clusters.

    Clusters are ranked by centroid L* descending (ties broken by larger
    member count, then centroid a/b); the estimate is the member-count
    weighted mean of the top `top_m` centroids, mapped back to sRGB (gamut
    clamped if the Lab average falls slightly outside).
    """
    pixels = image[mask.mask]
    if pixels.shape[0] < k:
        raise ExtractionError(
            f"mask holds {pixels.shape[0]} pixels; k-means needs at least {k}"
        )
    lab = srgb_to_lab_image(pixels)
    centroids, assign = _kmeans_lab(lab, k, seed)
    summaries = cluster_summaries(centroids, assign)
    order = sorted(
        range(k),
        key=lambda j: (
            -summaries[j].centroid.L,
            -summaries[j].count,
            summaries[j].centroid.a,
            summaries[j].centroid.b,
        ),
    )
    top = [j for j in order[:top_m] if summaries[j].count > 0]
    if not top:  # degenerate: every bright cluster emptied by re-seeding
        top = [j for j in order if summaries[j].count > 0][:top_m]
    weights = np.array([summaries[j].count for j in top], dtype=np.float64)
    stacked = np.stack([centroids[j] for j in top])
    wmean = (stacked * weights[:, None]).sum(axis=0) / weights.sum()
    srgb = lab_to_srgb(LabColor(*map(float, wmean))).color
    return SkinEstimate.from_mean(
        method, srgb, int(weights.sum()), used_chroma_fallback
    )


def extract(
    inp: ExtractionInput,
    method: ExtractionMethod,
    params: ExtractionParams | None = None,
    cascade: Cascade | None = None,
    detect_params: DetectParams | None = None,
) -> SkinEstimate:
    """Dispatch one extraction method over an input bundle.

    Albedo variants sample the albedo map with geometry/masks derived from
    the photograph, so a run with albedo == photo reproduces the base
    variant bit for bit.
    """
    params = params or ExtractionParams()
    if method.uses_albedo and inp.albedo is None:
        raise ExtractionError(f"method {method.value} requires an albedo map")
    target = inp.albedo if method.uses_albedo else inp.photo

    if method.family == "cheek":
        face = inp.face_box
        if face is None:
            if cascade is None:
                raise ExtractionError("no face box given and no cascade to detect with")
            face = select_primary_face(detect_faces(inp.photo, cascade, detect_params))
            if face is None:
                raise ExtractionError("face not found")
        h, w = inp.photo.shape[:2]
        rois = cheek_rois(face, (w, h), params)
        return mean_color(target, rois, method)

    if inp.landmarks is not None:
        h, w = inp.photo.shape[:2]
        mask = mask_from_landmarks(inp.landmarks, (w, h))
        fallback = False
    else:
        mask = mask_chroma_fallback(inp.photo)
        fallback = True
    return cluster_estimate(
        target,
        mask,
        k=params.kmeans_k,
        top_m=params.kmeans_top_m,
        seed=params.kmeans_seed,
        method=method,
        used_chroma_fallback=fallback,
    )
