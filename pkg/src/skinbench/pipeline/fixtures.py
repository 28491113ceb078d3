"""Synthetic dataset generator: face-like fixtures spanning all tone classes.

Twelve fixtures (two per tone class, light to dark) of a stylized face: a
skin-colored ellipse with darker eye/mouth features on a cool background.
The albedo holds the intrinsic color; the photo is the albedo attenuated in
linear light by a factor that grows along the ramp (1.0 down to 0.5),
realized by the same scaled-ambient SH environment that is also written per
image. Landmarks, face boxes, and SH files round out the manifest columns.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from skinbench.colorimetry import (
    LabColor,
    SrgbColor,
    lab_to_srgb,
    linear_to_srgb_image,
    srgb_to_linear_image,
)
from skinbench.imgio import save_image
from skinbench.pipeline.manifest import write_manifest_csv
from skinbench.relight import ShLighting, save_sh

# (tone angle deg, Lab b*, Lab a*) light to dark; two entries per class I-VI.
CLASS_RAMP = (
    (65.0, 12.0, 12.0),
    (58.0, 14.0, 12.0),
    (50.0, 18.0, 12.0),
    (44.0, 18.0, 13.0),
    (38.0, 20.0, 13.0),
    (31.0, 22.0, 13.0),
    (23.0, 24.0, 14.0),
    (15.0, 22.0, 14.0),
    (2.0, 20.0, 14.0),
    (-15.0, 18.0, 12.0),
    (-40.0, 14.0, 10.0),
    (-55.0, 10.0, 8.0),
)

ATTENUATION_RANGE = (1.0, 0.5)
BACKGROUND = (0.16, 0.22, 0.30)


def ramp_color(index: int) -> SrgbColor:
    """sRGB skin color for ramp position `index` (0 = lightest)."""
    angle, b, a = CLASS_RAMP[index % len(CLASS_RAMP)]
    lab = LabColor(50.0 + b * math.tan(math.radians(angle)), a, b)
    res = lab_to_srgb(lab)
    if res.clipped:
        raise ValueError(f"ramp color {index} out of gamut")
    return res.color


def attenuation(index: int, count: int) -> float:
    lo, hi = ATTENUATION_RANGE
    if count == 1:
        return lo
    return lo + (hi - lo) * index / (count - 1)


def _ellipse_mask(size: int, cx: float, cy: float, rx: float, ry: float) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size]
    return ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0


def _face_geometry(size: int) -> dict:
    cx = size / 2.0
    cy = round(0.52 * size)
    rx = round(0.33 * size)
    ry = round(0.41 * size)
    return {"cx": cx, "cy": cy, "rx": rx, "ry": ry}


def fixture_albedo(size: int, skin: SrgbColor) -> np.ndarray:
    """Stylized face: skin ellipse, darker eyes and mouth, cool background."""
    geo = _face_geometry(size)
    img = np.tile(np.asarray(BACKGROUND), (size, size, 1))
    face = _ellipse_mask(size, geo["cx"], geo["cy"], geo["rx"], geo["ry"])
    img[face] = skin.as_array()
    eye_dy = 0.16 * size
    eye_dx = 0.14 * size
    for sign in (-1.0, 1.0):
        eye = _ellipse_mask(
            size, geo["cx"] + sign * eye_dx, geo["cy"] - eye_dy,
            0.055 * size, 0.035 * size,
        )
        img[eye] = skin.as_array() * 0.35
    mouth = _ellipse_mask(
        size, geo["cx"], geo["cy"] + 0.20 * size, 0.10 * size, 0.035 * size
    )
    img[mouth] = skin.as_array() * 0.5
    return img


def fixture_face_box(size: int) -> tuple[int, int, int, int]:
    geo = _face_geometry(size)
    x = int(geo["cx"] - geo["rx"])
    y = int(geo["cy"] - geo["ry"])
    return (x, y, int(2 * geo["rx"] + 1), int(2 * geo["ry"] + 1))


def fixture_landmarks(size: int, n_points: int = 16) -> list[tuple[float, float]]:
    geo = _face_geometry(size)
    pts = []
    for i in range(n_points):
        theta = 2.0 * math.pi * i / n_points
        pts.append(
            (
                geo["cx"] + 0.92 * geo["rx"] * math.cos(theta),
                geo["cy"] + 0.92 * geo["ry"] * math.sin(theta),
            )
        )
    return pts


def generate_fixtures(out_dir, count: int = 12, size: int = 128) -> Path:
    """Write images/, landmark/SH files, and manifest.csv; returns its path."""
    out_dir = Path(out_dir)
    images = out_dir / "images"
    images.mkdir(parents=True, exist_ok=True)

    rows = []
    fx, fy, fw, fh = fixture_face_box(size)
    landmark_text = "\n".join(
        f"{x:.2f} {y:.2f}" for x, y in fixture_landmarks(size)
    )
    for i in range(count):
        image_id = f"fix{i:02d}"
        skin = ramp_color(i)
        albedo = fixture_albedo(size, skin)
        att = attenuation(i, count)
        photo = linear_to_srgb_image(srgb_to_linear_image(albedo) * att)

        albedo_path = images / f"{image_id}_albedo.png"
        photo_path = images / f"{image_id}_photo.png"
        lm_path = images / f"{image_id}_landmarks.txt"
        sh_path = images / f"{image_id}_sh.json"
        save_image(albedo, albedo_path)
        save_image(photo, photo_path)
        lm_path.write_text(landmark_text + "\n", encoding="utf-8")
        save_sh(ShLighting.ambient(att), sh_path)

        rows.append(
            {
                "id": image_id,
                "photo": f"images/{photo_path.name}",
                "albedo": f"images/{albedo_path.name}",
                "landmarks": f"images/{lm_path.name}",
                "sh": f"images/{sh_path.name}",
                "face_x": fx,
                "face_y": fy,
                "face_w": fw,
                "face_h": fh,
            }
        )

    manifest_path = out_dir / "manifest.csv"
    write_manifest_csv(rows, manifest_path)
    return manifest_path
