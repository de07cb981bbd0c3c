"""8-bit PNG and JSON Lines boundaries.

Values live in [0, 1] inside the library; files convert with v/255 on
load and round-half-up of v*255 (clamped) on save. Masks are stored as
0/255 single-channel PNGs.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image


def to_uint8(img: np.ndarray) -> np.ndarray:
    """[0,1] floats to 8-bit with round-half-up and clamping."""
    return np.clip(np.floor(np.asarray(img, dtype=float) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def from_uint8(raw: np.ndarray) -> np.ndarray:
    return np.asarray(raw, dtype=float) / 255.0


def load_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        return from_uint8(np.asarray(im.convert("RGB"), dtype=np.uint8))


def save_rgb(path, img: np.ndarray) -> None:
    Image.fromarray(to_uint8(img), mode="RGB").save(path)


def load_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8) > 127


def save_mask(path, mask: np.ndarray) -> None:
    raw = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(raw, mode="L").save(path)


def read_jsonl(path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def write_jsonl(path, records) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
