"""Chroma-aware tokenizer forward path and its weight container.

The perception stage encodes the hue and value planes with a shared
4-layer CNN (two stride-2 layers for a net 4x downsample), quantizes the
feature maps against a codebook, decodes them back, and reassembles an
HSV image with the untouched saturation plane. Token indices from both
planes are embedded and mean-pooled into a single feature vector that
drives the curve generator and the fusion-weight generator.

All learned parameters live in a ``WeightBundle``, a named-tensor
container with a small binary file format ("NTC"):

    magic "NTC1", u32 tensor count (little endian); per tensor:
    u16 name length, UTF-8 name, u8 rank, rank x u32 dims, then
    dim-product f32 values, row-major.

There is no training here: bundles are loaded from disk or randomly
initialized, and codebooks come from k-means over encoder features.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .color import hsv_to_rgb, rgb_to_hsv
from .luts import CIRCULAR, LINEAR, Lut1D, LutBank, LutSet, correct_hsv, residual_fuse

_NTC_MAGIC = b"NTC1"


class WeightBundle:
    """Immutable-by-convention mapping of tensor names to float arrays.

    Tensors are kept at full precision in memory; the NTC file format
    quantizes to f32 on save.
    """

    def __init__(self, tensors: dict[str, np.ndarray]):
        self._tensors = {
            name: np.asarray(t, dtype=np.float64) for name, t in tensors.items()
        }

    def names(self) -> list[str]:
        return sorted(self._tensors)

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def with_tensors(self, extra: dict[str, np.ndarray]) -> "WeightBundle":
        merged = dict(self._tensors)
        merged.update(extra)
        return WeightBundle(merged)

    def get(self, name: str, shape: tuple[int, ...] | None = None) -> np.ndarray:
        """Fetch a tensor as float64, checking the declared shape."""
        if name not in self._tensors:
            raise KeyError(f"weight bundle is missing tensor {name!r}")
        t = self._tensors[name]
        if shape is not None and t.shape != tuple(shape):
            raise ValueError(
                f"tensor {name!r} has shape {t.shape}, expected {tuple(shape)}"
            )
        return t

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_NTC_MAGIC)
            fh.write(struct.pack("<I", len(self._tensors)))
            for name in sorted(self._tensors):
                t = self._tensors[name]
                raw = name.encode("utf-8")
                fh.write(struct.pack("<H", len(raw)))
                fh.write(raw)
                fh.write(struct.pack("<B", t.ndim))
                for dim in t.shape:
                    fh.write(struct.pack("<I", dim))
                fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path) -> "WeightBundle":
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:4] != _NTC_MAGIC:
            raise ValueError(f"{path}: not an NTC weight file")
        off = 4
        (count,) = struct.unpack_from("<I", data, off)
        off += 4
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off : off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<B", data, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}I", data, off)
            off += 4 * rank
            n = int(np.prod(dims)) if rank else 1
            values = np.frombuffer(data, dtype="<f4", count=n, offset=off)
            off += 4 * n
            tensors[name] = values.reshape(dims).copy()
        return cls(tensors)


@dataclass(frozen=True)
class CastConfig:
    """Architecture sizes for freshly initialized bundles."""

    channels: int = 128
    hidden: int = 128
    n_l: int = 16
    s_lut: int = 33
    codebook_size: int = 4096
    codebook_dim: int = 128

    def __post_init__(self):
        if self.hidden % 4 != 0:
            raise ValueError("hidden must be divisible by 4")
        if self.codebook_size < 2:
            raise ValueError("codebook_size must be >= 2")


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def _conv3x3(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int) -> np.ndarray:
    """3x3 convolution with edge-replicate padding; output size ceil(in/stride)."""
    c_out, c_in, _, _ = weight.shape
    pad = np.pad(x, ((0, 0), (1, 1), (1, 1)), mode="edge")
    h_in, w_in = x.shape[1], x.shape[2]
    h_out = -(-h_in // stride)
    w_out = -(-w_in // stride)
    out = np.tile(bias[:, None, None], (1, h_out, w_out))
    for dy in range(3):
        for dx in range(3):
            patch = pad[
                :,
                dy : dy + stride * (h_out - 1) + 1 : stride,
                dx : dx + stride * (w_out - 1) + 1 : stride,
            ]
            out += np.einsum("oc,chw->ohw", weight[:, :, dy, dx], patch)
    return out


def _upsample2(x: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def encode(plane: np.ndarray, weights: WeightBundle) -> np.ndarray:
    """Shared-weight encoder: 4 conv layers, strides (2, 1, 2, 1), ReLU between.

    ``plane`` is a single channel in [0, 1]; hue must be pre-normalized
    by /360. Output has shape (C, ceil(H/4), ceil(W/4)).
    """
    x = np.asarray(plane, dtype=float)[None, :, :]
    c = weights.get("encoder.conv1.weight").shape[0]
    strides = (2, 1, 2, 1)
    c_ins = (1, c, c, c)
    for layer, (stride, c_in) in enumerate(zip(strides, c_ins), start=1):
        w = weights.get(f"encoder.conv{layer}.weight", (c, c_in, 3, 3))
        b = weights.get(f"encoder.conv{layer}.bias", (c,))
        x = _conv3x3(x, w, b, stride)
        if layer < 4:
            x = np.maximum(x, 0.0)
    return x


def decode(f_quant: np.ndarray, weights: WeightBundle, out_shape: tuple[int, int]) -> np.ndarray:
    """Decoder mirroring the encoder: upsample-conv stages back to plane size.

    Layout: up2 -> conv1 -> ReLU -> conv2 -> ReLU -> up2 -> conv3 -> ReLU
    -> conv4, output clamped to [0, 1] and cropped to ``out_shape``.
    """
    x = np.asarray(f_quant, dtype=float)
    c = x.shape[0]
    x = _upsample2(x)
    x = np.maximum(_conv3x3(x, weights.get("decoder.conv1.weight", (c, c, 3, 3)),
                            weights.get("decoder.conv1.bias", (c,)), 1), 0.0)
    x = np.maximum(_conv3x3(x, weights.get("decoder.conv2.weight", (c, c, 3, 3)),
                            weights.get("decoder.conv2.bias", (c,)), 1), 0.0)
    x = _upsample2(x)
    x = np.maximum(_conv3x3(x, weights.get("decoder.conv3.weight", (c, c, 3, 3)),
                            weights.get("decoder.conv3.bias", (c,)), 1), 0.0)
    x = _conv3x3(x, weights.get("decoder.conv4.weight", (1, c, 3, 3)),
                 weights.get("decoder.conv4.bias", (1,)), 1)
    h, w = out_shape
    return np.clip(x[0, :h, :w], 0.0, 1.0)


def vq_quantize(features: np.ndarray, codebook: np.ndarray):
    """Map each spatial feature vector to its nearest codebook entry.

    Returns (tokens, quantized) where tokens is an (H', W') int grid and
    quantized substitutes the matched entries. Ties go to the lowest index.
    """
    f = np.asarray(features, dtype=float)
    cb = np.asarray(codebook, dtype=float)
    c, h, w = f.shape
    if cb.ndim != 2 or cb.shape[1] != c:
        raise ValueError(
            f"codebook dim {cb.shape} does not match feature channels {c}"
        )
    flat = f.reshape(c, h * w).T
    d2 = (
        (flat * flat).sum(axis=1)[:, None]
        - 2.0 * flat @ cb.T
        + (cb * cb).sum(axis=1)[None, :]
    )
    tokens = np.argmin(d2, axis=1)
    quant = cb[tokens].T.reshape(c, h, w)
    return tokens.reshape(h, w), quant


def commitment_loss(features: np.ndarray, quantized: np.ndarray) -> float:
    """Mean squared distance between raw and quantized feature maps."""
    f = np.asarray(features, dtype=float)
    q = np.asarray(quantized, dtype=float)
    if f.shape != q.shape:
        raise ValueError("feature map shapes do not match")
    return float(np.mean((f - q) ** 2))


def reconstruct(img: np.ndarray, codebook: np.ndarray, weights: WeightBundle):
    """Encode/quantize/decode the H and V planes; S passes through untouched.

    Returns (reconstructed RGB image, hue token grid, value token grid).
    """
    img = np.asarray(img, dtype=float)
    hsv = rgb_to_hsv(img)
    h_frac = hsv[..., 0] / 360.0
    v_plane = hsv[..., 2]
    shape = h_frac.shape

    f_h = encode(h_frac, weights)
    f_v = encode(v_plane, weights)
    t_h, q_h = vq_quantize(f_h, codebook)
    t_v, q_v = vq_quantize(f_v, codebook)
    h_rec = (decode(q_h, weights, shape) * 360.0) % 360.0
    v_rec = decode(q_v, weights, shape)

    hsv_rec = np.stack([h_rec, hsv[..., 1], v_rec], axis=-1)
    return hsv_to_rgb(hsv_rec), t_h, t_v


def aggregate_tokens(t_h: np.ndarray, t_v: np.ndarray, weights: WeightBundle) -> np.ndarray:
    """Embed every token from both grids and mean-pool into one feature vector."""
    embed = weights.get("embed.weight")
    tokens = np.concatenate([np.ravel(t_h), np.ravel(t_v)]).astype(int)
    if tokens.size and (tokens.min() < 0 or tokens.max() >= embed.shape[0]):
        raise ValueError("token index out of embedding range")
    return embed[tokens].mean(axis=0)


def _linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    return weight @ x + bias


def bundle_dims(weights: WeightBundle) -> tuple[int, int]:
    """(n_l, s_lut) as implied by the generator head shapes."""
    n_l = weights.get("weightgen.fc2.weight").shape[0]
    d_out = weights.get("lutgen.fc2.weight").shape[0]
    if d_out % (3 * n_l) != 0:
        raise ValueError(
            f"curve generator output size {d_out} is not divisible by 3*N_L={3 * n_l}"
        )
    return n_l, d_out // (3 * n_l)


def generate_luts(f_token: np.ndarray, weights: WeightBundle) -> list[LutSet]:
    """Curve generator MLP: hidden -> hidden -> GELU -> N_L*3*S_LUT, sigmoid.

    The flat output is reshaped set-major with channel order (H, S, V);
    sigmoid keeps every control point inside (0, 1).
    """
    f = np.asarray(f_token, dtype=float)
    hidden = f.shape[0]
    n_l, s_lut = bundle_dims(weights)
    d_out = n_l * 3 * s_lut
    h1 = gelu(_linear(f, weights.get("lutgen.fc1.weight", (hidden, hidden)),
                      weights.get("lutgen.fc1.bias", (hidden,))))
    raw = _linear(h1, weights.get("lutgen.fc2.weight", (d_out, hidden)),
                  weights.get("lutgen.fc2.bias", (d_out,)))
    points = 1.0 / (1.0 + np.exp(-raw))
    grid = points.reshape(n_l, 3, s_lut)
    return [
        LutSet(
            h=Lut1D(grid[i, 0], CIRCULAR),
            s=Lut1D(grid[i, 1], LINEAR),
            v=Lut1D(grid[i, 2], LINEAR),
        )
        for i in range(n_l)
    ]


def generate_weights(f_token: np.ndarray, weights: WeightBundle) -> np.ndarray:
    """Fusion-weight MLP: hidden -> hidden/4 -> GELU -> N_L logits -> softmax."""
    f = np.asarray(f_token, dtype=float)
    hidden = f.shape[0]
    n_l = weights.get("weightgen.fc2.weight").shape[0]
    quarter = hidden // 4
    h1 = gelu(_linear(f, weights.get("weightgen.fc1.weight", (quarter, hidden)),
                      weights.get("weightgen.fc1.bias", (quarter,))))
    logits = _linear(h1, weights.get("weightgen.fc2.weight", (n_l, quarter)),
                     weights.get("weightgen.fc2.bias", (n_l,)))
    return softmax(logits)


def fit_codebook_kmeans(
    features: np.ndarray, k: int, seed: int = 0, max_iters: int = 100
) -> np.ndarray:
    """Lloyd's k-means with k-means++ seeding over D-dim feature vectors.

    Empty clusters are re-seeded from the point farthest from its
    assigned centroid. Stops after ``max_iters`` or when the relative
    inertia change drops below 1e-6.
    """
    pts = np.asarray(features, dtype=float)
    if pts.ndim != 2:
        raise ValueError("features must be an (N, D) array")
    n = pts.shape[0]
    if n < k:
        raise ValueError(f"need at least k={k} feature vectors, got {n}")
    rng = np.random.default_rng(seed)

    centers = np.empty((k, pts.shape[1]))
    centers[0] = pts[rng.integers(n)]
    d2 = ((pts - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = int(rng.integers(n))
        centers[j] = pts[idx]
        d2 = np.minimum(d2, ((pts - centers[j]) ** 2).sum(axis=1))

    prev_inertia = np.inf
    for _ in range(max_iters):
        dists = (
            (pts * pts).sum(axis=1)[:, None]
            - 2.0 * pts @ centers.T
            + (centers * centers).sum(axis=1)[None, :]
        )
        assign = np.argmin(dists, axis=1)
        point_d2 = ((pts - centers[assign]) ** 2).sum(axis=1)
        inertia = float(point_d2.sum())
        for j in range(k):
            sel = assign == j
            if sel.any():
                centers[j] = pts[sel].mean(axis=0)
            else:
                far = int(np.argmax(point_d2))
                centers[j] = pts[far]
                point_d2[far] = 0.0
        if prev_inertia - inertia <= 1e-6 * max(prev_inertia, 1e-12):
            break
        prev_inertia = inertia
    return centers


def correct_image(img: np.ndarray, codebook: np.ndarray, weights: WeightBundle) -> np.ndarray:
    """Full perceive-then-correct pass on one RGB image."""
    img = np.asarray(img, dtype=float)
    recon, t_h, t_v = reconstruct(img, codebook, weights)
    f_token = aggregate_tokens(t_h, t_v, weights)
    bank = LutBank(
        sets=generate_luts(f_token, weights),
        weights=generate_weights(f_token, weights),
    ).validate()
    fused = hsv_to_rgb(correct_hsv(rgb_to_hsv(recon), bank))
    return residual_fuse(
        fused,
        img,
        img,
        weights.get("fusion.weight", (3, 6)),
        weights.get("fusion.bias", (3,)),
    )


def random_bundle(config: CastConfig, seed: int = 0) -> WeightBundle:
    """Seeded random bundle with every consumer-declared tensor.

    Convs and linears get He-scaled Gaussians; the residual-fusion stage
    is zero-initialized so a fresh bundle behaves as an exact identity.
    """
    rng = np.random.default_rng(seed)
    c, hidden = config.channels, config.hidden
    d_out = config.n_l * 3 * config.s_lut

    def conv(c_out, c_in):
        std = np.sqrt(2.0 / (c_in * 9))
        return rng.normal(0.0, std, size=(c_out, c_in, 3, 3))

    def linear(n_out, n_in):
        std = np.sqrt(2.0 / n_in)
        return rng.normal(0.0, std, size=(n_out, n_in))

    tensors = {}
    c_ins = (1, c, c, c)
    for layer in range(1, 5):
        tensors[f"encoder.conv{layer}.weight"] = conv(c, c_ins[layer - 1])
        tensors[f"encoder.conv{layer}.bias"] = np.zeros(c)
    for layer in range(1, 4):
        tensors[f"decoder.conv{layer}.weight"] = conv(c, c)
        tensors[f"decoder.conv{layer}.bias"] = np.zeros(c)
    tensors["decoder.conv4.weight"] = conv(1, c)
    tensors["decoder.conv4.bias"] = np.zeros(1)
    tensors["embed.weight"] = rng.normal(0.0, 1.0 / np.sqrt(hidden),
                                         size=(config.codebook_size, hidden))
    tensors["lutgen.fc1.weight"] = linear(hidden, hidden)
    tensors["lutgen.fc1.bias"] = np.zeros(hidden)
    tensors["lutgen.fc2.weight"] = linear(d_out, hidden)
    tensors["lutgen.fc2.bias"] = np.zeros(d_out)
    tensors["weightgen.fc1.weight"] = linear(hidden // 4, hidden)
    tensors["weightgen.fc1.bias"] = np.zeros(hidden // 4)
    tensors["weightgen.fc2.weight"] = linear(config.n_l, hidden // 4)
    tensors["weightgen.fc2.bias"] = np.zeros(config.n_l)
    tensors["fusion.weight"] = np.zeros((3, 6))
    tensors["fusion.bias"] = np.zeros(3)
    return WeightBundle(tensors)


def random_codebook(config: CastConfig, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, 1.0, size=(config.codebook_size, config.codebook_dim))
