"""Texture recoloring: multiplicative normalization and additive variation map.

Both strategies move a base texture's overall color onto a target skin tone
while keeping per-texel structure: normalization preserves each texel's ratio
to the texture mean, the variation map preserves each texel's difference from
it. Arithmetic runs on gamma-encoded sRGB by default; a linear-light mode
exists for sensitivity analysis (the mean-equals-target contract then holds
in the linear domain instead).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from skinbench.colorimetry import SrgbColor, linear_to_srgb_image, srgb_to_linear_image
from skinbench.errors import RecolorError
from skinbench.imgio import load_image, save_image

NORMALIZE = "normalize"
VARIATION = "variation"
STRATEGIES = (NORMALIZE, VARIATION)


@dataclass
class Texture:
    """Unit-interval sRGB texel grid with its per-channel mean cached."""

    texels: np.ndarray

    def __post_init__(self) -> None:
        self.texels = np.asarray(self.texels, dtype=np.float64)
        if self.texels.ndim != 3 or self.texels.shape[-1] != 3:
            raise RecolorError(f"texture must be (H, W, 3), got {self.texels.shape}")
        if self.texels.min() < 0.0 or self.texels.max() > 1.0:
            raise RecolorError("texel values must lie in [0, 1]")
        self.mean = self.texels.reshape(-1, 3).mean(axis=0)

    @property
    def shape(self) -> tuple[int, int]:
        return self.texels.shape[0], self.texels.shape[1]


@dataclass(frozen=True)
class TextureProvenance:
    strategy: str
    target: SrgbColor
    clip_fraction: float
    space: str = "gamma"

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "target": [self.target.r, self.target.g, self.target.b],
            "clip_fraction": self.clip_fraction,
            "space": self.space,
        }


@dataclass
class RecoloredTexture:
    texture: Texture
    provenance: TextureProvenance

    @property
    def texels(self) -> np.ndarray:
        return self.texture.texels


def _finish(raw: np.ndarray, strategy: str, target: SrgbColor, space: str) -> RecoloredTexture:
    clipped_texels = np.any((raw < 0.0) | (raw > 1.0), axis=-1)
    clip_fraction = float(clipped_texels.mean())
    out = np.clip(raw, 0.0, 1.0)
    return RecoloredTexture(
        Texture(out), TextureProvenance(strategy, target, clip_fraction, space)
    )


def recolor_normalize(
    base: Texture, target: SrgbColor, space: str = "gamma"
) -> RecoloredTexture:
    """Divide each texel by the texture mean and scale by the target color.

    When no texel clips, the recolored texture's per-channel mean equals the
    target; texel/mean ratios are preserved exactly pre-clamp.
    """
    if space == "gamma":
        mean = base.mean
        texels = base.texels
        target_arr = target.as_array()
    elif space == "linear":
        texels = srgb_to_linear_image(base.texels)
        mean = texels.reshape(-1, 3).mean(axis=0)
        target_arr = srgb_to_linear_image(target.as_array())
    else:
        raise ValueError(f"unknown recolor space {space!r}")
    if (mean <= 1e-4).any():
        raise RecolorError(
            "base texture not color-neutral enough: near-zero mean channel"
        )
    raw = texels / mean * target_arr
    if space == "linear":
        raw = linear_to_srgb_image(raw)
    return _finish(raw, NORMALIZE, target, space)


def recolor_variation(
    base: Texture, target: SrgbColor, space: str = "gamma"
) -> RecoloredTexture:
    """Add the target color to the texture's per-texel deviation map.

    Pre-clamp, out - target equals base - mean exactly, so local contrast is
    carried over additively.
    """
    if space == "gamma":
        raw = base.texels - base.mean + target.as_array()
    elif space == "linear":
        lin = srgb_to_linear_image(base.texels)
        mean = lin.reshape(-1, 3).mean(axis=0)
        raw = linear_to_srgb_image(lin - mean + srgb_to_linear_image(target.as_array()))
    else:
        raise ValueError(f"unknown recolor space {space!r}")
    return _finish(raw, VARIATION, target, space)


def recolor(
    base: Texture, target: SrgbColor, strategy: str, space: str = "gamma"
) -> RecoloredTexture:
    if strategy == NORMALIZE:
        return recolor_normalize(base, target, space)
    if strategy == VARIATION:
        return recolor_variation(base, target, space)
    raise ValueError(f"unknown recolor strategy {strategy!r}")


def synthetic_base_texture(
    width: int = 128,
    height: int = 128,
    seed: int = 0,
    amplitude: float = 0.08,
    mean: tuple[float, float, float] = (0.5, 0.5, 0.5),
    grid: int = 8,
) -> Texture:
    """Procedural near-neutral base texture: seeded value noise around a mean.

    Deviations are bilinear-upsampled grid noise, recentred to zero mean per
    channel and rescaled so the largest deviation magnitude equals
    `amplitude`. amplitude=0 yields an exactly uniform texture.
    """
    base = np.tile(np.asarray(mean, dtype=np.float64), (height, width, 1))
    if amplitude == 0.0:
        return Texture(base)
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(-1.0, 1.0, size=(grid + 1, grid + 1, 3))

    ys = np.linspace(0.0, grid, height)
    xs = np.linspace(0.0, grid, width)
    y0 = np.minimum(ys.astype(np.int64), grid - 1)
    x0 = np.minimum(xs.astype(np.int64), grid - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    dev = (
        coarse[y0][:, x0] * (1 - fy) * (1 - fx)
        + coarse[y0][:, x0 + 1] * (1 - fy) * fx
        + coarse[y0 + 1][:, x0] * fy * (1 - fx)
        + coarse[y0 + 1][:, x0 + 1] * fy * fx
    )
    dev -= dev.reshape(-1, 3).mean(axis=0)
    peak = np.abs(dev).max()
    if peak > 0:
        dev *= amplitude / peak
    return Texture(np.clip(base + dev, 0.0, 1.0))


def save_recolored(rt: RecoloredTexture, path) -> None:
    """Write the texture image plus a provenance sidecar JSON."""
    path = Path(path)
    save_image(rt.texels, path)
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps(rt.provenance.to_dict(), indent=2) + "\n")


def load_texture(path) -> Texture:
    return Texture(load_image(path))
