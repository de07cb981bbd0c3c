"""1D lookup tables, per-channel HSV application, and weighted fusion.

A ``Lut1D`` is a row of control points over [0, 1]. Linear-domain curves
(S and V) clamp their input and output; the circular hue curve places its
control points at k/S, wraps between the last and first point, and
interpolates along the shortest arc so that identity curves really are
identities across the 0/1 seam.

Fusion combines N_L curve sets per channel: arithmetic weighted mean for
S and V, weighted circular mean (summed unit vectors, read back through
atan2) for hue.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

LINEAR = "linear"
CIRCULAR = "circular"


@dataclass
class Lut1D:
    values: np.ndarray
    domain: str = LINEAR

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 2:
            raise ValueError("a 1D-LUT needs at least 2 control points")
        if not np.isfinite(self.values).all():
            raise ValueError("control points must be finite")
        if self.domain not in (LINEAR, CIRCULAR):
            raise ValueError(f"unknown domain {self.domain!r}")


@dataclass
class LutSet:
    """One curve per HSV channel: hue circular, saturation/value linear."""

    h: Lut1D
    s: Lut1D
    v: Lut1D


@dataclass
class LutBank:
    """N_L curve sets plus their fusion weights (non-negative, sum 1)."""

    sets: list[LutSet]
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)

    def validate(self) -> "LutBank":
        if len(self.sets) < 1:
            raise ValueError("bank needs at least one LUT set")
        if self.weights.shape != (len(self.sets),):
            raise ValueError("one weight per LUT set required")
        if (self.weights < 0).any():
            raise ValueError("fusion weights must be non-negative")
        if abs(float(self.weights.sum()) - 1.0) > 1e-6:
            raise ValueError("fusion weights must sum to 1")
        return self

    def to_json(self) -> str:
        s_lut = self.sets[0].h.values.size
        return json.dumps(
            {
                "n_l": len(self.sets),
                "s_lut": s_lut,
                "weights": self.weights.tolist(),
                "sets": [
                    {
                        "h": ls.h.values.tolist(),
                        "s": ls.s.values.tolist(),
                        "v": ls.v.values.tolist(),
                    }
                    for ls in self.sets
                ],
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "LutBank":
        d = json.loads(text)
        sets = [
            LutSet(
                h=Lut1D(np.array(s["h"]), CIRCULAR),
                s=Lut1D(np.array(s["s"]), LINEAR),
                v=Lut1D(np.array(s["v"]), LINEAR),
            )
            for s in d["sets"]
        ]
        return cls(sets=sets, weights=np.array(d["weights"])).validate()


def identity_lut(s_lut: int, domain: str = LINEAR) -> Lut1D:
    """Curve whose application is the identity map on its domain."""
    if s_lut < 2:
        raise ValueError("s_lut must be >= 2")
    k = np.arange(s_lut, dtype=float)
    if domain == CIRCULAR:
        return Lut1D(k / s_lut, CIRCULAR)
    return Lut1D(k / (s_lut - 1), LINEAR)


def identity_bank(n_l: int, s_lut: int) -> LutBank:
    """Bank of identity curve sets with uniform fusion weights."""
    sets = [
        LutSet(
            h=identity_lut(s_lut, CIRCULAR),
            s=identity_lut(s_lut, LINEAR),
            v=identity_lut(s_lut, LINEAR),
        )
        for _ in range(n_l)
    ]
    return LutBank(sets=sets, weights=np.full(n_l, 1.0 / n_l))


def wrap_delta(d: np.ndarray) -> np.ndarray:
    """Signed shortest-arc difference on the unit circle, in [-0.5, 0.5)."""
    return (d + 0.5) % 1.0 - 0.5


def lut_segments(plane: np.ndarray, lut: Lut1D):
    """Segment index and interpolation fraction per pixel.

    Returns (idx, nxt, t, x) where the interpolated output is built from
    control points idx and nxt with weights (1 - t) and t, and x is the
    clamped/wrapped input actually looked up.
    """
    n = lut.values.size
    plane = np.asarray(plane, dtype=float)
    if lut.domain == CIRCULAR:
        x = plane % 1.0
        pos = x * n
        idx = np.minimum(np.floor(pos).astype(int), n - 1)
        t = pos - idx
        nxt = (idx + 1) % n
    else:
        x = np.clip(plane, 0.0, 1.0)
        pos = x * (n - 1)
        idx = np.minimum(np.floor(pos).astype(int), n - 2)
        t = pos - idx
        nxt = idx + 1
    return idx, nxt, t, x


def apply_lut(plane: np.ndarray, lut: Lut1D) -> np.ndarray:
    """Piecewise-linear application of a curve to a channel plane.

    Linear domain: input and output clamped to [0, 1]. Circular domain:
    values are circle positions; interpolation follows the shortest arc
    and the output is wrapped to [0, 1).
    """
    idx, nxt, t, _ = lut_segments(plane, lut)
    if lut.domain == CIRCULAR:
        base = lut.values % 1.0
        delta = wrap_delta(base[nxt] - base[idx])
        return (base[idx] + t * delta) % 1.0
    v = lut.values
    return np.clip(v[idx] * (1.0 - t) + v[nxt] * t, 0.0, 1.0)


def fuse_hue(per_set: np.ndarray, weights: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    """Weighted circular mean of hue planes (unit-circle fractions).

    ``per_set`` has shape (N_L, H, W). A zero-magnitude resultant keeps
    the fallback hue.
    """
    theta = 2.0 * np.pi * per_set
    c = np.tensordot(weights, np.cos(theta), axes=1)
    s = np.tensordot(weights, np.sin(theta), axes=1)
    fused = (np.arctan2(s, c) / (2.0 * np.pi)) % 1.0
    return np.where(c * c + s * s > 0.0, fused, fallback)


def correct_hsv(img_hsv: np.ndarray, bank: LutBank) -> np.ndarray:
    """Apply every LUT set per channel and fuse the outputs (weighted mean;
    circular mean for hue). Input and output hue are in degrees."""
    img_hsv = np.asarray(img_hsv, dtype=float)
    h_frac = img_hsv[..., 0] / 360.0
    s_plane = img_hsv[..., 1]
    v_plane = img_hsv[..., 2]

    h_out = np.stack([apply_lut(h_frac, ls.h) for ls in bank.sets])
    s_out = np.stack([apply_lut(s_plane, ls.s) for ls in bank.sets])
    v_out = np.stack([apply_lut(v_plane, ls.v) for ls in bank.sets])

    w = bank.weights
    h_fused = fuse_hue(h_out, w, h_frac)
    s_fused = np.tensordot(w, s_out, axes=1)
    v_fused = np.tensordot(w, v_out, axes=1)
    return np.stack([(h_fused * 360.0) % 360.0, s_fused, v_fused], axis=-1)


def residual_fuse(
    fused: np.ndarray,
    residual: np.ndarray,
    original: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray | None = None,
) -> np.ndarray:
    """1x1 convolution over [fused, residual] planes plus a global skip.

    ``weight`` is (3, 6) mapping the concatenated channels to RGB; the
    original image is added afterwards and the result clamped to [0, 1].
    Zero weights and bias make this an exact identity on the original.
    """
    fused = np.asarray(fused, dtype=float)
    residual = np.asarray(residual, dtype=float)
    original = np.asarray(original, dtype=float)
    if fused.shape != original.shape or residual.shape != original.shape:
        raise ValueError("image dimensions do not match")
    weight = np.asarray(weight, dtype=float)
    if weight.shape != (3, 6):
        raise ValueError(f"fusion weight must have shape (3, 6), got {weight.shape}")
    if bias is None:
        bias = np.zeros(3)
    bias = np.asarray(bias, dtype=float)
    if bias.shape != (3,):
        raise ValueError(f"fusion bias must have shape (3,), got {bias.shape}")
    stacked = np.concatenate([fused, residual], axis=-1)
    mixed = np.einsum("ok,hwk->hwo", weight, stacked) + bias
    return np.clip(mixed + original, 0.0, 1.0)
