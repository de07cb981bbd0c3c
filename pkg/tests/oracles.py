"""Independent reference implementations used to derive expected values.

Everything here is written against the declared formulas with plain
loops or direct numpy, deliberately avoiding the library's code paths
(separable filters, scipy morphology, vectorized interpolation) so the
two sides can disagree.
"""

import math

import numpy as np

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T


def luma601(rgb):
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def nearest_rank_percentile(values, pct):
    ordered = sorted(float(v) for v in np.ravel(values))
    rank = max(1, math.ceil(pct / 100.0 * len(ordered)))
    return ordered[rank - 1]


def conv3x3_replicate(img, kernel):
    """Direct 3x3 correlation with edge replication, one pixel at a time."""
    h, w = img.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    yy = min(max(y + dy, 0), h - 1)
                    xx = min(max(x + dx, 0), w - 1)
                    acc += kernel[dy + 1, dx + 1] * img[yy, xx]
            out[y, x] = acc
    return out


def sobel_magnitude_ref(gray):
    scaled = gray * 255.0
    gx = conv3x3_replicate(scaled, SOBEL_X)
    gy = conv3x3_replicate(scaled, SOBEL_Y)
    return np.sqrt(gx * gx + gy * gy)


def ellipse_member(size):
    c = (size - 1) / 2.0
    r = size / 2.0
    member = []
    for ey in range(size):
        for ex in range(size):
            if ((ey - c) / r) ** 2 + ((ex - c) / r) ** 2 <= 1.0:
                member.append((ey, ex))
    return member


def dilate_ref(mask, size):
    """Brute-force set dilation; anchor is the pixel at index size // 2."""
    h, w = mask.shape
    anchor = size // 2
    out = np.zeros((h, w), dtype=bool)
    offsets = [(ey - anchor, ex - anchor) for ey, ex in ellipse_member(size)]
    for y, x in zip(*np.nonzero(mask)):
        for dy, dx in offsets:
            yy, xx = y + dy, x + dx
            if 0 <= yy < h and 0 <= xx < w:
                out[yy, xx] = True
    return out


def gaussian_blur_ref(img, sigma):
    """Non-separable direct 2D Gaussian convolution, replicated borders."""
    radius = math.ceil(3.0 * sigma)
    coords = np.arange(-radius, radius + 1, dtype=float)
    k1 = np.exp(-(coords**2) / (2.0 * sigma * sigma))
    k1 /= k1.sum()
    kernel = np.outer(k1, k1)
    h, w = img.shape
    out = np.zeros((h, w))
    img = np.asarray(img, dtype=float)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    yy = min(max(y + dy, 0), h - 1)
                    xx = min(max(x + dx, 0), w - 1)
                    acc += kernel[dy + radius, dx + radius] * img[yy, xx]
            out[y, x] = acc
    return out


def radial_falloff_ref(width, height, gamma):
    cy, cx = height / 2.0, width / 2.0
    dist_max = math.hypot(cy - 0.5, cx - 0.5)
    out = np.zeros((height, width))
    for y in range(height):
        for x in range(width):
            d = math.hypot(y + 0.5 - cy, x + 0.5 - cx)
            out[y, x] = (d / dist_max) ** gamma
    return out


def synthesize_ref(gt, highlight_pct, grad_thresh, edge_width, strength, gamma, purple):
    """Step-by-step run of the synthesis algorithm on its own oracles.

    Returns (flare_image, candidate_mask) or (None, None) on the early
    exits. The separable-vs-direct blur difference is pure float noise.
    """
    gt = np.asarray(gt, dtype=float)
    h, w = gt.shape[:2]
    gray = luma601(gt)
    tau_h = nearest_rank_percentile(gray, highlight_pct)
    bright = gray > tau_h
    if not bright.any():
        return None, None
    grad = sobel_magnitude_ref(gray)
    edges = grad > grad_thresh
    candidate = bright & edges
    if not candidate.any():
        return None, None
    w_eff = max(1, min(edge_width, min(h, w) // 8))
    dilated = dilate_ref(candidate, w_eff)
    band = gaussian_blur_ref(dilated.astype(float), 0.6 * w_eff)
    radial = radial_falloff_ref(w, h, gamma)
    alpha = band / band.max() * radial * strength
    purple = np.asarray(purple, dtype=float)
    flare = gt * (1.0 - alpha[..., None]) + purple * alpha[..., None]
    return np.clip(flare, 0.0, 1.0), candidate


def srgb_to_lab_ref(r, g, b):
    """Scalar CIELAB reference evaluating the declared chain directly."""

    def expand(u):
        return ((u + 0.055) / 1.055) ** 2.4 if u > 0.04045 else u / 12.92

    rl, gl, bl = expand(r), expand(g), expand(b)
    x = 0.4124 * rl + 0.3576 * gl + 0.1805 * bl
    y = 0.2126 * rl + 0.7152 * gl + 0.0722 * bl
    z = 0.0193 * rl + 0.1192 * gl + 0.9505 * bl
    xn, yn, zn = 0.4124 + 0.3576 + 0.1805, 0.2126 + 0.7152 + 0.0722, 0.0193 + 0.1192 + 0.9505

    def f(t):
        return t ** (1.0 / 3.0) if t > (6.0 / 29.0) ** 3 else t / (3.0 * (6.0 / 29.0) ** 2) + 4.0 / 29.0

    fx, fy, fz = f(x / xn), f(y / yn), f(z / zn)
    return 116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)


def ssim_ref(luma_a, luma_b):
    """Sliding-window SSIM with explicit loops over valid positions."""
    size, sigma = 11, 1.5
    d = np.arange(size, dtype=float) - 5.0
    k = np.exp(-(d * d) / (2.0 * sigma * sigma))
    win = np.outer(k, k)
    win /= win.sum()
    c1, c2 = 0.01**2, 0.03**2
    h, w = luma_a.shape
    vals = []
    for y in range(h - size + 1):
        for x in range(w - size + 1):
            pa = luma_a[y : y + size, x : x + size]
            pb = luma_b[y : y + size, x : x + size]
            mu_a = (win * pa).sum()
            mu_b = (win * pb).sum()
            va = (win * pa * pa).sum() - mu_a * mu_a
            vb = (win * pb * pb).sum() - mu_b * mu_b
            cov = (win * pa * pb).sum() - mu_a * mu_b
            vals.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a**2 + mu_b**2 + c1) * (va + vb + c2))
            )
    return float(np.mean(vals))
