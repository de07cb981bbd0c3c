"""Composite loss terms and flare-specific evaluation metrics.

The flare suppression loss weights pixel errors by a penalty mask built
from the purple-saturation weight map (triangular hue weight over the
260-340 degree band, peaking at 300, times saturation) and a normalized
edge map. PSNR-F / PSNR-NF restrict the error sums to the inside/outside
of a binary flare mask; HAE is the saturation-weighted mean circular hue
error inside the flare region of the degraded input.

All reductions are means over channel samples, so loss weights keep
their meaning across image sizes. PSNR-style metrics cap at 100 dB when
the error is exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .color import circular_hue_diff, grayscale, rgb_to_hsv, rgb_to_lab
from .synthesis import gaussian_blur, sobel_magnitude

PSNR_CAP_DB = 100.0
PURPLE_BAND_CENTER = 300.0
PURPLE_BAND_HALF_WIDTH = 40.0
HAE_SATURATION_GATE = 0.2
HAE_EPS = 1e-8


@dataclass(frozen=True)
class LossWeights:
    """Term weights of the composite loss."""

    lambda_l1: float = 1.0
    lambda_p: float = 0.1
    lambda_f: float = 2.0
    lambda_q: float = 0.1

    def __post_init__(self):
        for name in ("lambda_l1", "lambda_p", "lambda_f", "lambda_q"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class MetricsReport:
    psnr: float
    ssim: float
    psnr_f: float | None
    psnr_nf: float | None
    hae: float | None
    delta_e: float

    def to_dict(self) -> dict:
        return {
            "psnr": self.psnr,
            "ssim": self.ssim,
            "psnr_f": self.psnr_f,
            "psnr_nf": self.psnr_nf,
            "hae": self.hae,
            "delta_e": self.delta_e,
        }


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"image dimensions do not match: {a.shape} vs {b.shape}")


def purple_weight(hsv: np.ndarray) -> np.ndarray:
    """Saturation-weighted triangular hue weight over the purple band."""
    h = hsv[..., 0]
    s = hsv[..., 1]
    tri = np.clip(1.0 - circular_hue_diff(h, PURPLE_BAND_CENTER) / PURPLE_BAND_HALF_WIDTH, 0.0, 1.0)
    return s * tri


def penalty_mask(img: np.ndarray) -> np.ndarray:
    """Product of the purple weight map and the max-normalized edge map."""
    img = np.asarray(img, dtype=float)
    purple = purple_weight(rgb_to_hsv(img))
    grad = sobel_magnitude(grayscale(img))
    peak = grad.max()
    edges = grad / peak if peak > 0 else np.zeros_like(grad)
    return purple * edges


def l1_loss(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_same_shape(a, b)
    return float(np.mean(np.abs(a - b)))


def flare_suppression_loss(out: np.ndarray, gt: np.ndarray, mask: np.ndarray) -> float:
    """Mean of mask-weighted absolute differences (mask broadcast over channels)."""
    out = np.asarray(out, dtype=float)
    gt = np.asarray(gt, dtype=float)
    _check_same_shape(out, gt)
    m = np.asarray(mask, dtype=float)
    if m.shape != out.shape[:2]:
        raise ValueError("mask dimensions do not match the images")
    return float(np.mean(m[..., None] * np.abs(out - gt)))


def _pyramid(luma: np.ndarray, levels: int = 3) -> list[np.ndarray]:
    out = [luma]
    for _ in range(levels - 1):
        out.append(gaussian_blur(out[-1], 1.0)[::2, ::2])
    return out


def perceptual_proxy(a: np.ndarray, b: np.ndarray) -> float:
    """Mean L1 over a 3-level Gaussian luma pyramid (1x, 1/2x, 1/4x)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_same_shape(a, b)
    pa = _pyramid(grayscale(a))
    pb = _pyramid(grayscale(b))
    return float(np.mean([np.mean(np.abs(x - y)) for x, y in zip(pa, pb)]))


def commitment_term(f: np.ndarray | None, f_quant: np.ndarray | None) -> float:
    if f is None and f_quant is None:
        return 0.0
    if f is None or f_quant is None:
        raise ValueError("both feature maps are required for the VQ term")
    from .cast import commitment_loss

    return commitment_loss(f, f_quant)


def total_loss(
    out: np.ndarray,
    gt: np.ndarray,
    f: np.ndarray | None = None,
    f_quant: np.ndarray | None = None,
    weights: LossWeights = LossWeights(),
):
    """Weighted composite loss; returns (total, per-term breakdown).

    The penalty mask for the flare term is built from the ground truth so
    the target stays fixed during optimization.
    """
    terms = {
        "l1": l1_loss(out, gt),
        "perceptual": perceptual_proxy(out, gt),
        "flare": flare_suppression_loss(out, gt, penalty_mask(gt)),
        "vq": commitment_term(f, f_quant),
    }
    total = (
        weights.lambda_l1 * terms["l1"]
        + weights.lambda_p * terms["perceptual"]
        + weights.lambda_f * terms["flare"]
        + weights.lambda_q * terms["vq"]
    )
    return total, terms


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_same_shape(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(1.0 / mse))


def _ssim_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    d = np.arange(size, dtype=float) - (size - 1) / 2.0
    k = np.exp(-(d * d) / (2.0 * sigma * sigma))
    win = np.outer(k, k)
    return win / win.sum()


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Single-scale SSIM on luma: 11x11 Gaussian window (sigma 1.5),
    K1=0.01, K2=0.03, valid-mode windows only."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_same_shape(a, b)
    x = grayscale(a)
    y = grayscale(b)
    if x.shape[0] < 11 or x.shape[1] < 11:
        raise ValueError("image too small for the 11x11 SSIM window")
    win = _ssim_window()
    r = 5

    def smooth(z):
        return ndimage.correlate(z, win, mode="constant")[r:-r, r:-r]

    mu_x = smooth(x)
    mu_y = smooth(y)
    xx = smooth(x * x) - mu_x * mu_x
    yy = smooth(y * y) - mu_y * mu_y
    xy = smooth(x * y) - mu_x * mu_y
    c1 = 0.01**2
    c2 = 0.03**2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def psnr_masked(out: np.ndarray, gt: np.ndarray, mask: np.ndarray, region: str) -> float:
    """PSNR restricted to the flare (mask) or non-flare (complement) region."""
    out = np.asarray(out, dtype=float)
    gt = np.asarray(gt, dtype=float)
    _check_same_shape(out, gt)
    m = np.asarray(mask, dtype=bool)
    if region == "flare":
        sel = m
    elif region == "nonflare":
        sel = ~m
    else:
        raise ValueError(f"unknown region {region!r}")
    weight = 3.0 * float(sel.sum())
    if weight == 0.0:
        raise ValueError(f"undefined metric: empty {region} region")
    se = float((((out - gt) ** 2) * sel[..., None].astype(float)).sum())
    if se == 0.0:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(weight / se))


def hae_region(input_img: np.ndarray, grad_thresh: float = 25.0) -> np.ndarray:
    """Flare region of a degraded input: strong edges with purple hue and
    saturation above the significance gate."""
    input_img = np.asarray(input_img, dtype=float)
    hsv_in = rgb_to_hsv(input_img)
    edges = sobel_magnitude(grayscale(input_img)) > grad_thresh
    in_band = circular_hue_diff(hsv_in[..., 0], PURPLE_BAND_CENTER) <= PURPLE_BAND_HALF_WIDTH
    saturated = hsv_in[..., 1] > HAE_SATURATION_GATE
    return edges & in_band & saturated


def hae(
    out: np.ndarray,
    gt: np.ndarray,
    input_img: np.ndarray,
    grad_thresh: float = 25.0,
) -> float:
    """Saturation-weighted mean circular hue error inside the flare region.

    The region comes from the degraded input; weights are the ground
    truth saturations. An empty region scores 0 by convention.
    """
    out = np.asarray(out, dtype=float)
    gt = np.asarray(gt, dtype=float)
    _check_same_shape(out, gt)
    _check_same_shape(np.asarray(input_img), gt)
    region = hae_region(input_img, grad_thresh)
    if not region.any():
        return 0.0
    hsv_out = rgb_to_hsv(out)
    hsv_gt = rgb_to_hsv(gt)
    dh = circular_hue_diff(hsv_out[..., 0], hsv_gt[..., 0])[region]
    s_gt = hsv_gt[..., 1][region]
    return float((dh * s_gt).sum() / (s_gt.sum() + HAE_EPS))


def delta_e(a: np.ndarray, b: np.ndarray) -> float:
    """Mean CIE76 color difference in Lab."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_same_shape(a, b)
    d = rgb_to_lab(a) - rgb_to_lab(b)
    return float(np.mean(np.sqrt((d * d).sum(axis=-1))))


def compute_report(
    pred: np.ndarray,
    gt: np.ndarray,
    mask: np.ndarray | None = None,
    input_img: np.ndarray | None = None,
) -> MetricsReport:
    """Full metric suite for one sample.

    PSNR-F / PSNR-NF are None when no mask is given or the selected
    region is empty; HAE is None without the degraded input image.
    """
    psnr_f = psnr_nf = None
    if mask is not None:
        try:
            psnr_f = psnr_masked(pred, gt, mask, "flare")
        except ValueError:
            psnr_f = None
        try:
            psnr_nf = psnr_masked(pred, gt, mask, "nonflare")
        except ValueError:
            psnr_nf = None
    hae_val = hae(pred, gt, input_img) if input_img is not None else None
    return MetricsReport(
        psnr=psnr(pred, gt),
        ssim=ssim(pred, gt),
        psnr_f=psnr_f,
        psnr_nf=psnr_nf,
        hae=hae_val,
        delta_e=delta_e(pred, gt),
    )
