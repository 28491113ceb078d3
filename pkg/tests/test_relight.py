import math

import numpy as np
import pytest

from skinbench.colorimetry import srgb_to_linear_image
from skinbench.recolor import Texture, synthetic_base_texture
from skinbench.relight import (
    DEFAULT_EXPOSURE,
    LightingConfig,
    LightingError,
    RenderProxy,
    ShLighting,
    add_lights,
    lighting_preset,
    project_directional_to_sh,
    render_proxy,
    sh_irradiance,
    sh_irradiance_image,
)


def fibonacci_sphere(n):
    i = np.arange(n) + 0.5
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1 - z * z)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def quadrature_irradiance(direction, normals, half_angle_deg=2.0, n_theta=600, n_phi=1200):
    """Numerical quadrature of (clamped cosine) x (narrow cone around the
    light direction, normalized to unit solid-angle integral)."""
    th = (np.arange(n_theta) + 0.5) / n_theta * math.pi
    ph = (np.arange(n_phi) + 0.5) / n_phi * 2 * math.pi
    T, P = np.meshgrid(th, ph, indexing="ij")
    dirs = np.stack(
        [np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1
    ).reshape(-1, 3)
    w = (np.sin(T) * (math.pi / n_theta) * (2 * math.pi / n_phi)).reshape(-1)
    mask = dirs @ direction >= math.cos(math.radians(half_angle_deg))
    lobe_dirs, lobe_w = dirs[mask], w[mask]
    cosines = np.clip(normals @ lobe_dirs.T, 0, None)
    return (cosines * lobe_w).sum(axis=1) / lobe_w.sum()


def _rotation(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    k = np.array(
        [
            [0, -axis[2], axis[1]],
            [axis[2], 0, -axis[0]],
            [-axis[1], axis[0], 0],
        ]
    )
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)


def test_identity_ambient_is_unit_irradiance_everywhere():
    light = ShLighting.ambient(1.0)
    for n in fibonacci_sphere(32):
        e = sh_irradiance(n, light)
        assert e.as_array() == pytest.approx([1.0, 1.0, 1.0], abs=1e-12)


def test_zero_light_gives_zero():
    e = sh_irradiance(np.array([0.0, 0.0, 1.0]), ShLighting.zero())
    assert e.as_array() == pytest.approx([0.0, 0.0, 0.0], abs=0.0)


def test_directional_light_matches_quadrature_oracle():
    d = np.array([0.3, -0.5, 0.81])
    d /= np.linalg.norm(d)
    normals = fibonacci_sphere(64)
    light = project_directional_to_sh(d, (1.0, 1.0, 1.0))
    e_sh = sh_irradiance_image(normals, light)[:, 0]
    e_true = quadrature_irradiance(d, normals)
    err = e_sh - e_true
    # Order-2 SH band-limit error: ~3% RMS, ~8.6% worst-case at grazing
    # angles, relative to the light intensity.
    assert math.sqrt(float((err**2).mean())) <= 0.05
    assert float(np.abs(err).max()) <= 0.10


def test_axial_projection_has_no_azimuthal_terms():
    light = project_directional_to_sh((0.0, 0.0, 1.0), (1.0, 1.0, 1.0))
    # m != 0 coefficients: indices 1, 3 (band 1) and 4, 5, 7, 8 (band 2).
    for idx in (1, 3, 4, 5, 7, 8):
        assert light.coeffs[:, idx] == pytest.approx([0.0] * 3, abs=1e-15)


def test_opposite_directions_flip_band1_only():
    d = np.array([0.48, 0.6, 0.64])
    d /= np.linalg.norm(d)
    a = project_directional_to_sh(d, (1.0, 1.0, 1.0)).coeffs
    b = project_directional_to_sh(-d, (1.0, 1.0, 1.0)).coeffs
    assert b[:, 0] == pytest.approx(a[:, 0])
    assert b[:, 1:4] == pytest.approx(-a[:, 1:4])
    assert b[:, 4:] == pytest.approx(a[:, 4:])


def test_rotation_invariance_of_directional_irradiance():
    rng = np.random.default_rng(29)
    d = np.array([0.0, 0.6, 0.8])
    n = np.array([0.36, -0.48, 0.8])
    base = sh_irradiance(n, project_directional_to_sh(d, (1.0, 0.8, 0.6)))
    for _ in range(10):
        rot = _rotation(rng.normal(size=3), float(rng.uniform(0, 2 * math.pi)))
        rotated = sh_irradiance(
            rot @ n, project_directional_to_sh(rot @ d, (1.0, 0.8, 0.6))
        )
        assert rotated.as_array() == pytest.approx(base.as_array(), abs=1e-6)


def test_energy_scales_linearly_with_coefficients():
    light = lighting_preset("paramount")
    for n in fibonacci_sphere(16):
        e1 = sh_irradiance(n, light).as_array()
        e3 = sh_irradiance(n, light.scaled(3.0)).as_array()
        assert e3 == pytest.approx(3.0 * e1, abs=1e-12)


def test_frontal_preset_cosine_falloff():
    light = lighting_preset("frontal")
    on_axis = sh_irradiance(np.array([0.0, 0.0, 1.0]), light).as_array()
    off = math.radians(60.0)
    off_axis = sh_irradiance(
        np.array([math.sin(off), 0.0, math.cos(off)]), light
    ).as_array()
    assert (off_axis < on_axis).all()


def test_paramount_differs_from_frontal():
    n = np.array([0.0, 0.0, 1.0])
    f = sh_irradiance(n, lighting_preset("frontal")).as_array()
    p = sh_irradiance(n, lighting_preset("paramount")).as_array()
    assert not np.allclose(f, p)


def test_presets_are_pure():
    a = lighting_preset("paramount").coeffs
    b = lighting_preset("paramount").coeffs
    assert np.array_equal(a, b)


def test_negative_band0_warns_but_constructs():
    coeffs = np.zeros((3, 9))
    coeffs[0, 0] = -0.5
    with pytest.warns(UserWarning, match="band-0"):
        ShLighting(coeffs)


def test_sh_json_round_trip(tmp_path):
    from skinbench.relight import load_sh, save_sh

    light = add_lights(lighting_preset("paramount"), ShLighting.ambient(0.25))
    path = tmp_path / "env.json"
    save_sh(light, path)
    back = load_sh(path)
    assert np.array_equal(back.coeffs, light.coeffs)
    assert back.convention == light.convention
    with pytest.raises(LightingError, match="convention"):
        ShLighting.from_json(
            light.to_json().replace("real-sh-bands0-2", "other-order")
        )


def test_sphere_proxy_normals_unit_on_coverage():
    proxy = RenderProxy.sphere(64, 64)
    norms = np.linalg.norm(proxy.normals[proxy.coverage], axis=-1)
    assert np.abs(norms - 1.0).max() <= 1e-6
    assert proxy.coverage.sum() > 0.5 * 64 * 64  # disc fills most of the frame


def test_render_identity_ambient_closed_loop():
    tex = synthetic_base_texture(32, 32, seed=19)
    proxy = RenderProxy.flat(32, 32)
    out = render_proxy(tex, ShLighting.ambient(1.0), proxy, exposure=DEFAULT_EXPOSURE)
    assert np.abs(out - tex.texels).max() < 1e-12


def test_render_half_ambient_halves_linear_values():
    tex = synthetic_base_texture(16, 16, seed=23)
    proxy = RenderProxy.flat(16, 16)
    out = render_proxy(tex, ShLighting.ambient(0.5), proxy)
    got_linear = srgb_to_linear_image(out)
    want_linear = 0.5 * srgb_to_linear_image(tex.texels)
    assert np.abs(got_linear - want_linear).max() < 1e-12


def test_render_sphere_directional_monotone_and_matches_per_pixel_oracle():
    tex = Texture(np.full((48, 48, 3), 0.5))
    proxy = RenderProxy.sphere(48, 48)
    light = lighting_preset("frontal")
    out = render_proxy(tex, light, proxy)

    # Per-pixel oracle recomputation, scalar math.
    env = light.coeffs
    factors = np.array([math.pi] + [2 * math.pi / 3] * 3 + [math.pi / 4] * 5)
    ys, xs = np.nonzero(proxy.coverage)
    rng = np.random.default_rng(31)
    picks = rng.choice(len(ys), size=100, replace=False)
    albedo_lin = srgb_to_linear_image(np.array([0.5, 0.5, 0.5]))
    for i in picks:
        n = proxy.normals[ys[i], xs[i]]
        x, y, z = n
        basis = np.array(
            [
                0.5 * math.sqrt(1 / math.pi),
                math.sqrt(3 / (4 * math.pi)) * y,
                math.sqrt(3 / (4 * math.pi)) * z,
                math.sqrt(3 / (4 * math.pi)) * x,
                0.5 * math.sqrt(15 / math.pi) * x * y,
                0.5 * math.sqrt(15 / math.pi) * y * z,
                0.25 * math.sqrt(5 / math.pi) * (3 * z * z - 1),
                0.5 * math.sqrt(15 / math.pi) * x * z,
                0.25 * math.sqrt(15 / math.pi) * (x * x - y * y),
            ]
        )
        e = max(0.0, float((env[0] * factors * basis).sum()))
        lin = albedo_lin[0] * e * (DEFAULT_EXPOSURE / math.pi)
        want = (
            lin * 12.92 if lin <= 0.0031308 else 1.055 * lin ** (1 / 2.4) - 0.055
        )
        assert out[ys[i], xs[i], 0] == pytest.approx(min(1.0, want), abs=1e-12)

    # Brightness is monotone in n.z along the lit sphere.
    nz = proxy.normals[..., 2][proxy.coverage]
    lum = out[..., 0][proxy.coverage]
    order = np.argsort(nz)
    sorted_lum = lum[order]
    assert (np.diff(sorted_lum) >= -1e-9).all()


def test_render_background_fill():
    tex = Texture(np.full((24, 24, 3), 0.6))
    proxy = RenderProxy.sphere(24, 24)
    out = render_proxy(tex, ShLighting.ambient(1.0), proxy, background=(0.1, 0.2, 0.3))
    assert np.allclose(out[~proxy.coverage], [0.1, 0.2, 0.3])


def test_render_rejects_dimension_mismatch():
    tex = Texture(np.full((16, 24, 3), 0.5))
    with pytest.raises(LightingError, match="dimensions"):
        render_proxy(tex, ShLighting.ambient(1.0), RenderProxy.flat(16, 16))


def test_lighting_config_resolution():
    cfg = LightingConfig("image-sh", ShLighting.ambient(0.7))
    assert np.array_equal(cfg.resolve().coeffs, ShLighting.ambient(0.7).coeffs)
    assert np.array_equal(
        LightingConfig("frontal").resolve().coeffs, lighting_preset("frontal").coeffs
    )
    with pytest.raises(LightingError):
        LightingConfig("image-sh")
    with pytest.raises(LightingError):
        LightingConfig("sunset")
