"""Color-space conversions and circular hue arithmetic.

Array conventions used across the package:

* RGB images: float arrays of shape (H, W, 3), channels in [0, 1].
* HSV images: float arrays of shape (H, W, 3); channel 0 is hue in
  degrees [0, 360), channels 1 and 2 are saturation/value in [0, 1].
* Grayscale images: float arrays of shape (H, W), values in [0, 1].
* Lab images: float arrays of shape (H, W, 3) holding (L*, a*, b*).

Achromatic pixels (max == min) get H = 0 and S = 0. Luma uses BT.601
weights. Lab uses the sRGB companding curve and a D65 white point taken
as the XYZ image of RGB white, so pure white maps exactly to
(L*, a*, b*) = (100, 0, 0).
"""

from __future__ import annotations

import numpy as np

# sRGB (linear) -> XYZ, D65, 2 degree observer
_SRGB_TO_XYZ = np.array(
    [
        [0.4124, 0.3576, 0.1805],
        [0.2126, 0.7152, 0.0722],
        [0.0193, 0.1192, 0.9505],
    ]
)
# White point chosen as the transform of RGB (1,1,1) so white is an
# exact fixed point of the Lab conversion.
_WHITE_XYZ = _SRGB_TO_XYZ.sum(axis=1)

_LAB_EPS = (6.0 / 29.0) ** 3
_LAB_SLOPE = 3.0 * (6.0 / 29.0) ** 2


def rgb_to_hsv(img: np.ndarray) -> np.ndarray:
    """Convert an RGB image to HSV (hexcone model, hue in degrees)."""
    img = np.asarray(img, dtype=float)
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    v = img.max(axis=-1)
    c = v - img.min(axis=-1)
    chromatic = c > 0
    safe_c = np.where(chromatic, c, 1.0)
    safe_v = np.where(v > 0, v, 1.0)

    s = np.where(v > 0, c / safe_v, 0.0)

    is_r = chromatic & (v == r)
    is_g = chromatic & (v == g) & ~is_r
    is_b = chromatic & ~is_r & ~is_g
    h = np.zeros_like(v)
    h = np.where(is_r, ((g - b) / safe_c) % 6.0, h)
    h = np.where(is_g, (b - r) / safe_c + 2.0, h)
    h = np.where(is_b, (r - g) / safe_c + 4.0, h)
    h = (h * 60.0) % 360.0
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(img: np.ndarray) -> np.ndarray:
    """Convert an HSV image (hue in degrees) back to RGB."""
    img = np.asarray(img, dtype=float)
    h, s, v = img[..., 0], img[..., 1], img[..., 2]
    h6 = (h % 360.0) / 60.0
    k = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(k, [v, q, p, p, t, v])
    g = np.choose(k, [t, v, v, q, p, p])
    b = np.choose(k, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def grayscale(img: np.ndarray) -> np.ndarray:
    """BT.601 luma of an RGB image."""
    img = np.asarray(img, dtype=float)
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def circular_hue_diff(h1, h2):
    """Shortest angular distance between two hues in degrees, in [0, 180]."""
    d = np.abs(np.asarray(h1, dtype=float) - np.asarray(h2, dtype=float))
    return np.minimum(d, 360.0 - d)


def rgb_to_lab(img: np.ndarray) -> np.ndarray:
    """Convert an sRGB image to CIELAB (D65)."""
    srgb = np.asarray(img, dtype=float)
    linear = np.where(
        srgb > 0.04045, ((srgb + 0.055) / 1.055) ** 2.4, srgb / 12.92
    )
    xyz = linear @ _SRGB_TO_XYZ.T
    ratio = xyz / _WHITE_XYZ
    f = np.where(ratio > _LAB_EPS, np.cbrt(ratio), ratio / _LAB_SLOPE + 4.0 / 29.0)
    lum = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([lum, a, b], axis=-1)
