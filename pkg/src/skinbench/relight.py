"""Proxy relighting: order-2 spherical-harmonics shading of a recolored texture.

Stands in for the engine rendering stage. A texture is treated as albedo on a
proxy geometry (front-facing hemisphere by default), lit by a 9-coefficient-
per-channel SH environment, and re-encoded to sRGB. There is deliberately no
shadowing, subsurface or specular term: the stage isolates color transport.

SH convention (printed in every coefficient file): real basis, bands 0-2,
coefficient order [Y00, Y1-1, Y10, Y11, Y2-2, Y2-1, Y20, Y21, Y22],
channel-major storage. Normals use x right, y up, z toward the camera.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from skinbench.colorimetry import LinearRgb, linear_to_srgb_image, srgb_to_linear_image
from skinbench.errors import SkinbenchError
from skinbench.recolor import RecoloredTexture, Texture

SH_CONVENTION = "real-sh-bands0-2/channel-major"

# Real SH basis constants.
_C0 = 0.5 * math.sqrt(1.0 / math.pi)
_C1 = math.sqrt(3.0 / (4.0 * math.pi))
_C2A = 0.5 * math.sqrt(15.0 / math.pi)   # xy, yz, xz terms
_C2B = 0.25 * math.sqrt(5.0 / math.pi)   # (3z^2 - 1) term
_C2C = 0.25 * math.sqrt(15.0 / math.pi)  # (x^2 - y^2) term

# Clamped-cosine band factors for the irradiance expansion.
_BAND_FACTORS = np.array(
    [math.pi]
    + [2.0 * math.pi / 3.0] * 3
    + [math.pi / 4.0] * 5
)

# Default exposure: identity-ambient irradiance is 1, shading divides by pi,
# so exposure pi closes the loop exactly.
DEFAULT_EXPOSURE = math.pi

FRONTAL_KEY_INTENSITY = 1.0
PARAMOUNT_KEY_INTENSITY = 1.0
PARAMOUNT_KEY_ELEVATION_DEG = 45.0
PARAMOUNT_FILL_FRACTION = 0.25


class LightingError(SkinbenchError):
    pass


def sh_basis(n: np.ndarray) -> np.ndarray:
    """Evaluate the 9 real SH basis functions at unit vectors (..., 3)."""
    n = np.asarray(n, dtype=np.float64)
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    return np.stack(
        [
            np.full_like(x, _C0),
            _C1 * y,
            _C1 * z,
            _C1 * x,
            _C2A * x * y,
            _C2A * y * z,
            _C2B * (3.0 * z * z - 1.0),
            _C2A * x * z,
            _C2C * (x * x - y * y),
        ],
        axis=-1,
    )


@dataclass(frozen=True)
class ShLighting:
    """9 SH coefficients per channel, shape (3, 9), channel-major."""

    coeffs: np.ndarray
    convention: str = SH_CONVENTION

    def __post_init__(self) -> None:
        arr = np.asarray(self.coeffs, dtype=np.float64)
        if arr.shape != (3, 9):
            raise LightingError(f"SH coefficients must be (3, 9), got {arr.shape}")
        if not np.isfinite(arr).all():
            raise LightingError("SH coefficients must be finite")
        object.__setattr__(self, "coeffs", arr)
        if (arr[:, 0] < 0).any():
            warnings.warn(
                "negative band-0 SH coefficient: environment is not physically "
                "meaningful",
                stacklevel=3,
            )

    @classmethod
    def zero(cls) -> "ShLighting":
        return cls(np.zeros((3, 9)))

    @classmethod
    def ambient(cls, value: float | tuple[float, float, float] = 1.0) -> "ShLighting":
        """Band-0-only environment whose irradiance equals `value` for all n."""
        rgb = np.broadcast_to(np.asarray(value, dtype=np.float64), (3,))
        coeffs = np.zeros((3, 9))
        coeffs[:, 0] = rgb * 2.0 / math.sqrt(math.pi)  # 1 / (pi * Y00)
        return cls(coeffs)

    def scaled(self, s: float) -> "ShLighting":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return ShLighting(self.coeffs * s, self.convention)

    def to_json(self) -> str:
        return json.dumps(
            {"convention": self.convention, "channels": self.coeffs.tolist()},
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "ShLighting":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise LightingError(f"bad SH JSON: {exc}") from exc
        if not isinstance(data, dict) or "channels" not in data:
            raise LightingError("SH JSON needs a 'channels' field")
        convention = data.get("convention", SH_CONVENTION)
        if convention != SH_CONVENTION:
            raise LightingError(
                f"unsupported SH convention {convention!r} (expected {SH_CONVENTION!r})"
            )
        return cls(np.asarray(data["channels"], dtype=np.float64))


def load_sh(path) -> ShLighting:
    with open(path, "r", encoding="utf-8") as fh:
        return ShLighting.from_json(fh.read())


def save_sh(light: ShLighting, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(light.to_json() + "\n")


def project_directional_to_sh(
    direction: np.ndarray, intensity: LinearRgb | tuple[float, float, float]
) -> ShLighting:
    """Analytic projection of a delta light (direction toward the light)."""
    d = np.asarray(direction, dtype=np.float64)
    if abs(float(np.linalg.norm(d)) - 1.0) > 1e-6:
        raise LightingError("light direction must be a unit vector")
    rgb = (
        intensity.as_array()
        if isinstance(intensity, LinearRgb)
        else np.asarray(intensity, dtype=np.float64)
    )
    basis = sh_basis(d)
    return ShLighting(rgb[:, None] * basis[None, :])


def add_lights(a: ShLighting, b: ShLighting) -> ShLighting:
    return ShLighting(a.coeffs + b.coeffs)


def sh_irradiance(n: np.ndarray, light: ShLighting) -> LinearRgb:
    """Irradiance at one unit normal; floored at zero per channel."""
    e = sh_irradiance_image(np.asarray(n, dtype=np.float64)[None, :], light)[0]
    return LinearRgb(float(e[0]), float(e[1]), float(e[2]))


def sh_irradiance_image(normals: np.ndarray, light: ShLighting) -> np.ndarray:
    """Vectorized irradiance over (..., 3) normals -> (..., 3) linear RGB."""
    basis = sh_basis(normals)
    e = basis @ (light.coeffs * _BAND_FACTORS).T
    return np.maximum(e, 0.0)


@dataclass(frozen=True)
class LightingConfig:
    """One of the lighting variants: frontal, paramount, or a per-image SH file."""

    kind: str  # "frontal" | "paramount" | "image-sh"
    sh: ShLighting | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("frontal", "paramount", "image-sh"):
            raise LightingError(f"unknown lighting kind {self.kind!r}")
        if self.kind == "image-sh" and self.sh is None:
            raise LightingError("image-sh lighting needs SH coefficients")

    def resolve(self) -> ShLighting:
        if self.kind == "image-sh":
            return self.sh
        return lighting_preset(self.kind)


def lighting_preset(tag: str) -> ShLighting:
    """Deterministic studio presets.

    frontal: one key light along +z (camera axis), intensity 1.0.
    paramount: key from 45 degrees above the front (azimuth 0) at intensity
    1.0 plus a 25% frontal fill.
    """
    if tag == "frontal":
        return project_directional_to_sh(
            (0.0, 0.0, 1.0), (FRONTAL_KEY_INTENSITY,) * 3
        )
    if tag == "paramount":
        el = math.radians(PARAMOUNT_KEY_ELEVATION_DEG)
        key = project_directional_to_sh(
            (0.0, math.sin(el), math.cos(el)), (PARAMOUNT_KEY_INTENSITY,) * 3
        )
        fill = project_directional_to_sh(
            (0.0, 0.0, 1.0),
            (PARAMOUNT_KEY_INTENSITY * PARAMOUNT_FILL_FRACTION,) * 3,
        )
        return add_lights(key, fill)
    raise LightingError(f"unknown lighting preset {tag!r}")


@dataclass
class RenderProxy:
    """Per-pixel unit normals plus a coverage mask."""

    normals: np.ndarray
    coverage: np.ndarray

    def __post_init__(self) -> None:
        self.normals = np.asarray(self.normals, dtype=np.float64)
        self.coverage = np.asarray(self.coverage, dtype=bool)
        norms = np.linalg.norm(self.normals[self.coverage], axis=-1)
        if norms.size and np.abs(norms - 1.0).max() > 1e-6:
            raise LightingError("proxy normals must be unit length on coverage")

    @property
    def shape(self) -> tuple[int, int]:
        return self.normals.shape[0], self.normals.shape[1]

    @classmethod
    def flat(cls, width: int, height: int) -> "RenderProxy":
        normals = np.zeros((height, width, 3))
        normals[..., 2] = 1.0
        return cls(normals, np.ones((height, width), dtype=bool))

    @classmethod
    def sphere(cls, width: int, height: int, radius: float = 0.95) -> "RenderProxy":
        """Front-facing hemisphere filling `radius` of the half-extent."""
        xs = (np.arange(width) + 0.5) / width * 2.0 - 1.0
        ys = (np.arange(height) + 0.5) / height * 2.0 - 1.0
        gx, gy = np.meshgrid(xs, ys)
        sx = gx / radius
        sy = -gy / radius  # +y up
        r2 = sx * sx + sy * sy
        coverage = r2 <= 1.0
        nz = np.sqrt(np.clip(1.0 - r2, 0.0, None))
        normals = np.stack(
            [np.where(coverage, sx, 0.0), np.where(coverage, sy, 0.0),
             np.where(coverage, nz, 1.0)],
            axis=-1,
        )
        return cls(normals, coverage)


def render_proxy(
    texture: RecoloredTexture | Texture,
    light: LightingConfig | ShLighting,
    proxy: RenderProxy,
    exposure: float = DEFAULT_EXPOSURE,
    background: tuple[float, float, float] = (0.0, 0.0, 0.0),
) -> np.ndarray:
    """Shade the texture as albedo under the lighting; returns an sRGB image.

    Per covered pixel: linearize the texel, multiply by irradiance/pi and by
    exposure, re-encode with clamping. Uncovered pixels take the background
    color.
    """
    texels = texture.texels if hasattr(texture, "texels") else texture
    env = light.resolve() if isinstance(light, LightingConfig) else light
    if texels.shape[:2] != proxy.shape:
        raise LightingError(
            f"texture {texels.shape[:2]} and proxy {proxy.shape} dimensions differ"
        )
    albedo = srgb_to_linear_image(texels)
    irradiance = sh_irradiance_image(proxy.normals, env)
    linear = albedo * irradiance * (exposure / math.pi)
    out = np.clip(linear_to_srgb_image(linear), 0.0, 1.0)
    out[~proxy.coverage] = background
    return out
