import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def make_disc_image(size=64, center=(20, 44), radius=9.0, disc=(1.0, 0.85, 0.55), bg=0.12):
    """Smooth dim background plus one bright disc with a conical brightness
    peak, so the top-percentile pixels also sit on strong gradients."""
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    base = bg + 0.25 * (xx / size) + 0.1 * (yy / size)
    img = np.stack([base * 0.9, base, base * 1.1], axis=-1)
    dist = np.hypot(yy - center[0], xx - center[1])
    cone = np.clip(1.0 - 0.5 * dist / radius, 0.0, 1.0)
    feather = np.clip((radius - dist) / 1.5 + 0.5, 0.0, 1.0)
    disc_rgb = np.asarray(disc) * cone[..., None]
    img = img * (1.0 - feather[..., None]) + disc_rgb * feather[..., None]
    return np.clip(img, 0.0, 1.0)


def make_fit_scene(rng, size=128):
    """Clean scene for fit-efficacy runs: smooth colored background away
    from purple, plus a bright disc pushed toward a corner so the radial
    falloff gives the synthesized flare real strength and the blended
    hues actually land in the purple band."""
    yy, xx = np.mgrid[0:size, 0:size].astype(float) / size
    hue = rng.uniform(20.0, 220.0)
    base_rgb = np.asarray(_hsv_pixel(hue, rng.uniform(0.7, 0.85), rng.uniform(0.25, 0.4)))
    tilt_rgb = np.asarray(
        _hsv_pixel(hue + rng.uniform(-30, 30), rng.uniform(0.7, 0.85), rng.uniform(0.3, 0.45))
    )
    wgt = (xx * rng.uniform(0.4, 1.0) + yy * rng.uniform(0.4, 1.0)) / 2.0
    img = base_rgb * (1 - wgt[..., None]) + tilt_rgb * wgt[..., None]

    corner = rng.integers(0, 4)
    cy = rng.uniform(0.08, 0.16) * size if corner < 2 else rng.uniform(0.84, 0.92) * size
    cx = rng.uniform(0.08, 0.16) * size if corner % 2 == 0 else rng.uniform(0.84, 0.92) * size
    radius = rng.uniform(11, 16)
    disc_rgb = np.asarray(_hsv_pixel(rng.uniform(30.0, 60.0), rng.uniform(0.3, 0.5), 1.0))
    py, px = np.mgrid[0:size, 0:size].astype(float)
    dist = np.hypot(py - cy, px - cx)
    cone = np.clip(1.0 - 0.45 * dist / radius, 0.0, 1.0)
    feather = np.clip((radius - dist) / 2.0 + 0.5, 0.0, 1.0)
    img = img * (1.0 - feather[..., None]) + (disc_rgb * cone[..., None]) * feather[..., None]
    return np.clip(img, 0.0, 1.0)


def _hsv_pixel(h, s, v):
    from flarekit.color import hsv_to_rgb

    return tuple(hsv_to_rgb(np.array([[[h % 360.0, s, v]]]))[0, 0])


@pytest.fixture
def disc_image():
    return make_disc_image()
