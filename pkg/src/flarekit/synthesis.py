"""Parametric purple-flare synthesis and scene-level dataset splitting.

The pipeline turns a clean image into a (degraded, clean, mask) triplet:
bright highlights are intersected with strong edges to form the candidate
flare mask, the candidate is dilated and blurred into a soft band, scaled
by a radial falloff and a global strength, and the result alpha-blends a
fixed purple over the clean image. Frames whose bright or candidate mask
is empty produce no sample (``synthesize`` returns ``None``).

Masks are boolean (H, W) arrays; soft masks are non-negative float
(H, W) arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .color import grayscale

# Blend target: [255, 100, 255] BGR expressed as RGB fractions.
PURPLE_RGB = (1.0, 100.0 / 255.0, 1.0)

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T


@dataclass(frozen=True)
class SynthParams:
    """Knobs of the flare synthesis pipeline (defaults generate the dataset)."""

    highlight_pct: float = 99.0
    grad_thresh: float = 25.0
    edge_width: int = 80
    strength: float = 0.7
    gamma: float = 2.2
    purple: tuple[float, float, float] = PURPLE_RGB
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.highlight_pct <= 100.0:
            raise ValueError("highlight_pct must be in (0, 100]")
        if self.grad_thresh < 0.0:
            raise ValueError("grad_thresh must be >= 0")
        if self.edge_width < 1:
            raise ValueError("edge_width must be >= 1")
        if not 0.0 <= self.strength <= 1.0:
            raise ValueError("strength must be in [0, 1]")
        if self.gamma <= 0.0:
            raise ValueError("gamma must be > 0")

    def to_dict(self) -> dict:
        return {
            "highlight_pct": self.highlight_pct,
            "grad_thresh": self.grad_thresh,
            "edge_width": self.edge_width,
            "strength": self.strength,
            "gamma": self.gamma,
            "purple": list(self.purple),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthParams":
        kwargs = dict(d)
        if "purple" in kwargs:
            kwargs["purple"] = tuple(kwargs["purple"])
        return cls(**kwargs)


@dataclass
class FlareSample:
    """Degraded/clean/mask triplet plus the parameters that produced it."""

    input: np.ndarray
    gt: np.ndarray
    mask: np.ndarray
    params: SynthParams
    scene_id: str = ""
    frame_id: str = ""


def percentile_threshold(img: np.ndarray, pct: float) -> float:
    """Nearest-rank percentile of all pixel values (1-based index ceil(pct/100*N))."""
    vals = np.asarray(img, dtype=float).ravel()
    if vals.size == 0:
        raise ValueError("empty image")
    if not 0.0 < pct <= 100.0:
        raise ValueError("pct must be in (0, 100]")
    order = np.sort(vals)
    rank = max(1, math.ceil(pct / 100.0 * vals.size))
    return float(order[rank - 1])


def bright_mask(img: np.ndarray, tau_h: float) -> np.ndarray:
    """Pixels strictly brighter than the highlight threshold."""
    return np.asarray(img, dtype=float) > tau_h


def sobel_magnitude(img: np.ndarray) -> np.ndarray:
    """Sobel gradient magnitude on the 0-255 scale, replicated borders."""
    img = np.asarray(img, dtype=float)
    if img.ndim != 2 or img.shape[0] < 3 or img.shape[1] < 3:
        raise ValueError("image must be at least 3x3")
    scaled = img * 255.0
    gx = ndimage.correlate(scaled, _SOBEL_X, mode="nearest")
    gy = ndimage.correlate(scaled, _SOBEL_Y, mode="nearest")
    return np.hypot(gx, gy)


def edge_mask(grad: np.ndarray, tau_g: float) -> np.ndarray:
    """Pixels whose 0-255-scale gradient magnitude strictly exceeds tau_g."""
    return np.asarray(grad, dtype=float) > tau_g


def candidate_flare_mask(bright: np.ndarray, edge: np.ndarray) -> np.ndarray:
    """Intersection of the highlight and edge masks."""
    bright = np.asarray(bright, dtype=bool)
    edge = np.asarray(edge, dtype=bool)
    if bright.shape != edge.shape:
        raise ValueError("mask dimensions do not match")
    return bright & edge


def ellipse_element(size: int) -> np.ndarray:
    """Filled discrete ellipse inscribed in a size x size box.

    A pixel belongs to the element iff its center lies inside the
    inscribed ellipse (boundary included). The dilation anchor is the
    pixel at index size // 2 along each axis.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    c = (size - 1) / 2.0
    r = size / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    return ((yy - c) / r) ** 2 + ((xx - c) / r) ** 2 <= 1.0


def dilate_ellipse(mask: np.ndarray, size: int) -> np.ndarray:
    """Morphological dilation with the inscribed-ellipse element."""
    mask = np.asarray(mask, dtype=bool)
    if size == 1:
        return mask.copy()
    return ndimage.binary_dilation(mask, structure=ellipse_element(size))


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, kernel radius ceil(3*sigma), replicated borders."""
    if sigma <= 0.0:
        raise ValueError("sigma must be > 0")
    img = np.asarray(img, dtype=float)
    radius = math.ceil(3.0 * sigma)
    d = np.arange(-radius, radius + 1, dtype=float)
    kernel = np.exp(-(d * d) / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    out = ndimage.correlate1d(img, kernel, axis=0, mode="nearest")
    return ndimage.correlate1d(out, kernel, axis=1, mode="nearest")


def radial_falloff(width: int, height: int, gamma: float) -> np.ndarray:
    """Radial mask (dist/dist_max)^gamma from the image center, in [0, 1]."""
    if gamma <= 0.0:
        raise ValueError("gamma must be > 0")
    cy, cx = height / 2.0, width / 2.0
    y = np.arange(height, dtype=float) + 0.5
    x = np.arange(width, dtype=float) + 0.5
    dist = np.hypot(y[:, None] - cy, x[None, :] - cx)
    dist_max = math.hypot(cy - 0.5, cx - 0.5)
    if dist_max == 0.0:
        return np.zeros((height, width))
    return (dist / dist_max) ** gamma


def alpha_mask(band: np.ndarray, radial: np.ndarray, strength: float) -> np.ndarray:
    """Max-normalized flare band scaled by the radial mask and blend strength."""
    band = np.asarray(band, dtype=float)
    peak = band.max()
    if peak <= 0.0:
        raise ValueError("empty flare band")
    return band / peak * np.asarray(radial, dtype=float) * strength


def blend_flare(gt: np.ndarray, alpha: np.ndarray, purple) -> np.ndarray:
    """Alpha-blend the purple color over the clean image, clamped to [0, 1]."""
    gt = np.asarray(gt, dtype=float)
    a = np.asarray(alpha, dtype=float)[..., None]
    out = gt * (1.0 - a) + np.asarray(purple, dtype=float) * a
    return np.clip(out, 0.0, 1.0)


def effective_edge_width(edge_width: int, height: int, width: int) -> int:
    """Structuring-element size clamped to 1/8 of the smaller image side."""
    return max(1, min(edge_width, min(height, width) // 8))


def synthesize(
    gt: np.ndarray,
    params: SynthParams | None = None,
    scene_id: str = "",
    frame_id: str = "",
) -> FlareSample | None:
    """Run the full synthesis pipeline on a clean image.

    Returns ``None`` when the frame has no usable highlight/edge overlap.
    """
    if params is None:
        params = SynthParams()
    gt = np.asarray(gt, dtype=float)
    height, width = gt.shape[:2]

    gray = grayscale(gt)
    tau_h = percentile_threshold(gray, params.highlight_pct)
    bright = bright_mask(gray, tau_h)
    if not bright.any():
        return None

    grad = sobel_magnitude(gray)
    edges = edge_mask(grad, params.grad_thresh)
    candidate = candidate_flare_mask(bright, edges)
    if not candidate.any():
        return None

    w_eff = effective_edge_width(params.edge_width, height, width)
    dilated = dilate_ellipse(candidate, w_eff)
    band = gaussian_blur(dilated, 0.6 * w_eff)
    radial = radial_falloff(width, height, params.gamma)
    alpha = alpha_mask(band, radial, params.strength)
    flare = blend_flare(gt, alpha, params.purple)
    return FlareSample(
        input=flare,
        gt=gt,
        mask=candidate,
        params=params,
        scene_id=scene_id,
        frame_id=frame_id,
    )


def jitter_params(params: SynthParams, scale: float, rng: np.random.Generator) -> SynthParams:
    """Uniformly jitter the numeric knobs by +-scale (fractional), clamped to valid ranges.

    ``scale`` = 0 returns the parameters unchanged; the rng still draws so
    per-frame streams stay aligned whether or not jitter is enabled.
    """
    u = rng.uniform(-scale, scale, size=4)
    if scale == 0.0:
        return params
    return replace(
        params,
        highlight_pct=float(min(100.0, max(50.0, params.highlight_pct * (1.0 + u[0])))),
        grad_thresh=float(max(0.0, params.grad_thresh * (1.0 + u[1]))),
        strength=float(min(1.0, max(0.0, params.strength * (1.0 + u[2])))),
        gamma=float(max(1e-3, params.gamma * (1.0 + u[3]))),
    )


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_scenes(scene_ids, seed: int) -> dict[str, list[str]]:
    """Deterministic 80/10/10 scene-level split (train, then test, remainder val)."""
    ids = [str(s) for s in scene_ids]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate scene ids")
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n = len(ids)
    n_train = _round_half_up(0.8 * n)
    n_test = _round_half_up(0.1 * n)
    train = shuffled[:n_train]
    test = shuffled[n_train : n_train + n_test]
    val = shuffled[n_train + n_test :]
    return {"train": train, "val": val, "test": test}
