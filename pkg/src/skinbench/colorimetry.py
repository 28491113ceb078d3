"""CIELAB colorimetry: sRGB <-> Lab under D65, Delta-E (CIE76), ITA angle and tone classes.

All conversions assume display-referred sRGB with the standard piecewise
transfer function and the 2-degree D65 white point. Image variants operate on
float arrays of shape (..., 3); scalar variants wrap the same arithmetic in
small value types.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import NamedTuple

import numpy as np

D65_WHITE = (0.95047, 1.00000, 1.08883)

_DELTA = 6.0 / 29.0

# Standard sRGB/BT.709 -> XYZ matrix (D65). Each row is rescaled so RGB
# (1,1,1) lands exactly on the reference white: the raw 7-digit coefficients
# sum to Y = 1.0000001, which would push white past L* = 100. The rescale is
# ~1e-7, far below every tolerance used downstream.
_RGB_TO_XYZ_RAW = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_RGB_TO_XYZ = _RGB_TO_XYZ_RAW * (
    np.array(D65_WHITE) / _RGB_TO_XYZ_RAW.sum(axis=1)
)[:, None]
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)


@dataclass(frozen=True)
class SrgbColor:
    """Display-referred sRGB color, each component in [0, 1]."""

    r: float
    g: float
    b: float

    def __post_init__(self) -> None:
        for name in ("r", "g", "b"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"sRGB component {name}={v!r} outside [0, 1]")

    @classmethod
    def from_8bit(cls, r: int, g: int, b: int) -> "SrgbColor":
        return cls(r / 255.0, g / 255.0, b / 255.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.g, self.b])


@dataclass(frozen=True)
class LinearRgb:
    """Linear-light RGB; components >= 0, may exceed 1 before display clamp."""

    r: float
    g: float
    b: float

    def __post_init__(self) -> None:
        for name in ("r", "g", "b"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"linear RGB component {name} must be >= 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.g, self.b])


@dataclass(frozen=True)
class LabColor:
    """CIELAB color: L in [0, 100] for in-gamut sRGB, a/b unbounded."""

    L: float
    a: float
    b: float

    def as_array(self) -> np.ndarray:
        return np.array([self.L, self.a, self.b])


class ItaClass(IntEnum):
    """Six skin-tone classes; ordering follows tone depth, VI is darkest."""

    I = 1
    II = 2
    III = 3
    IV = 4
    V = 5
    VI = 6


class PerceptibilityBand(Enum):
    """Qualitative Delta-E ranges; the six bands partition [0, 100]."""

    NOT_PERCEPTIBLE = "not perceptible"
    CLOSE_OBSERVATION = "perceptible through close observation"
    AT_A_GLANCE = "perceptible at a glance"
    NOTICEABLE = "noticeably different"
    STRONG = "strong color difference"
    OPPOSITE = "completely different"


class GamutResult(NamedTuple):
    color: SrgbColor
    clipped: bool


def srgb_to_linear_image(srgb: np.ndarray) -> np.ndarray:
    """Apply the sRGB EOTF (piecewise, threshold 0.04045, exponent 2.4)."""
    srgb = np.asarray(srgb, dtype=np.float64)
    return np.where(
        srgb <= 0.04045,
        srgb / 12.92,
        ((srgb + 0.055) / 1.055) ** 2.4,
    )


def linear_to_srgb_image(linear: np.ndarray) -> np.ndarray:
    """Inverse EOTF; input is clamped at 0 before encoding."""
    linear = np.maximum(np.asarray(linear, dtype=np.float64), 0.0)
    return np.where(
        linear <= 0.0031308,
        linear * 12.92,
        1.055 * linear ** (1.0 / 2.4) - 0.055,
    )


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3.0 * _DELTA**2) + 4.0 / 29.0)


def _lab_f_inv(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA, t**3, 3.0 * _DELTA**2 * (t - 4.0 / 29.0))


def srgb_to_lab_image(srgb: np.ndarray) -> np.ndarray:
    """Convert an (..., 3) sRGB array in [0, 1] to CIELAB (D65)."""
    xyz = srgb_to_linear_image(srgb) @ _RGB_TO_XYZ.T
    f = _lab_f(xyz / np.array(D65_WHITE))
    out = np.empty_like(f)
    out[..., 0] = 116.0 * f[..., 1] - 16.0
    out[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    out[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return out


def lab_to_srgb_image(lab: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Convert CIELAB to sRGB; returns (srgb in [0, 1], per-pixel clip mask)."""
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    xyz = _lab_f_inv(np.stack([fx, fy, fz], axis=-1)) * np.array(D65_WHITE)
    linear = xyz @ _XYZ_TO_RGB.T
    srgb = linear_to_srgb_image(linear)
    # Negative linear values encode out-of-gamut chroma; they clamp to 0 via
    # linear_to_srgb_image, so detect clipping on both routes. The 1e-9 slack
    # keeps round-trip float dust from flagging in-gamut colors.
    clipped = np.any((linear < -1e-9) | (srgb > 1.0 + 1e-9), axis=-1)
    return np.clip(srgb, 0.0, 1.0), clipped


def srgb_to_lab(c: SrgbColor) -> LabColor:
    lab = srgb_to_lab_image(c.as_array())
    return LabColor(float(lab[0]), float(lab[1]), float(lab[2]))


def lab_to_srgb(c: LabColor) -> GamutResult:
    """Invert srgb_to_lab; out-of-gamut channels clamp to [0, 1] with a flag."""
    srgb, clipped = lab_to_srgb_image(c.as_array())
    return GamutResult(
        SrgbColor(float(srgb[0]), float(srgb[1]), float(srgb[2])), bool(clipped)
    )


def delta_e(x: LabColor, y: LabColor) -> float:
    """CIE76 color difference: Euclidean distance in CIELAB."""
    return math.sqrt((y.L - x.L) ** 2 + (y.a - x.a) ** 2 + (y.b - x.b) ** 2)


def delta_e_band(de: float) -> PerceptibilityBand:
    """Map a Delta-E value to its perceptibility band (upper edges inclusive)."""
    if de < 0.0:
        raise ValueError("delta E must be non-negative")
    if de <= 1.0:
        return PerceptibilityBand.NOT_PERCEPTIBLE
    if de <= 2.0:
        return PerceptibilityBand.CLOSE_OBSERVATION
    if de <= 10.0:
        return PerceptibilityBand.AT_A_GLANCE
    if de <= 50.0:
        return PerceptibilityBand.NOTICEABLE
    if de <= 99.0:
        return PerceptibilityBand.STRONG
    return PerceptibilityBand.OPPOSITE


def ita_degrees(c: LabColor) -> float:
    """Tone angle in degrees: arctan((L - 50) / b), in (-180, 180].

    Uses the two-argument arctangent so b = 0 yields +/-90 instead of a
    division fault (continuous limit of the ratio form; the single-argument
    branch choice for b <= 0 is an artifact decision, not a claim about the
    source formula).
    """
    deg = math.degrees(math.atan2(c.L - 50.0, c.b))
    if deg <= -180.0:
        deg += 360.0
    return deg


def ita_degrees_image(lab: np.ndarray) -> np.ndarray:
    """Vectorized ita_degrees over an (..., 3) Lab array."""
    lab = np.asarray(lab, dtype=np.float64)
    deg = np.degrees(np.arctan2(lab[..., 0] - 50.0, lab[..., 2]))
    return np.where(deg <= -180.0, deg + 360.0, deg)


def ita_class(deg: float) -> ItaClass:
    """Six-way tone classification; shared boundaries go to the darker class."""
    if deg > 55.0:
        return ItaClass.I
    if deg > 41.0:
        return ItaClass.II
    if deg > 28.0:
        return ItaClass.III
    if deg > 10.0:
        return ItaClass.IV
    if deg > -30.0:
        return ItaClass.V
    return ItaClass.VI
