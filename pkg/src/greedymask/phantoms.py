"""Synthetic datasets: Shepp-Logan, random piecewise-constant blobs and a
beating dynamic phantom, with random translation/rotation augmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import Dataset, ImageStack

PHANTOM_KINDS = ("shepp_logan", "piecewise_blobs", "dynamic_beating")

# Modified Shepp-Logan (Toft): intensity, semi-axis a, semi-axis b, x0, y0, angle [deg]
SHEPP_LOGAN_ELLIPSES = (
    (1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.80, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.20, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.20, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.10, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.10, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.10, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.10, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.10, 0.0230, 0.0230, 0.00, -0.6060, 0.0),
    (0.10, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
)


@dataclass(frozen=True)
class PhantomSpec:
    kind: str = "shepp_logan"
    h: int = 64
    w: int = 64
    t: int = 1
    shift: float = 0.0
    rotation: float = 0.0
    count: int = 1

    def __post_init__(self):
        if self.kind not in PHANTOM_KINDS:
            raise ValueError(f"unknown phantom kind {self.kind!r}")
        if min(self.h, self.w, self.t, self.count) < 1:
            raise ValueError("phantom dims and count must be positive")
        if self.shift < 0 or self.rotation < 0:
            raise ValueError("augmentation ranges must be non-negative")

    def to_json(self) -> dict:
        return {"kind": self.kind, "h": self.h, "w": self.w, "t": self.t,
                "shift": self.shift, "rotation": self.rotation, "count": self.count}


def _grid(h: int, w: int):
    y = 1.0 - (2.0 * np.arange(h) + 1.0) / h
    x = (2.0 * np.arange(w) + 1.0) / w - 1.0
    return np.meshgrid(x, y)


def ellipses(h: int, w: int, table) -> np.ndarray:
    """Sum of filled ellipses on pixel centres of the [-1, 1]^2 square."""
    xx, yy = _grid(h, w)
    img = np.zeros((h, w))
    for val, a, b, x0, y0, deg in table:
        th = np.deg2rad(deg)
        xr = (xx - x0) * np.cos(th) + (yy - y0) * np.sin(th)
        yr = -(xx - x0) * np.sin(th) + (yy - y0) * np.cos(th)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += val
    return img


def shepp_logan(h: int, w: int | None = None) -> np.ndarray:
    return np.clip(ellipses(h, w or h, SHEPP_LOGAN_ELLIPSES), 0.0, 1.0)


def _blobs(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    table = [(0.3, 0.8, 0.85, 0.0, 0.0, 0.0)]
    for _ in range(int(rng.integers(3, 7))):
        table.append((float(rng.uniform(0.1, 0.6)), float(rng.uniform(0.08, 0.3)),
                      float(rng.uniform(0.08, 0.3)), float(rng.uniform(-0.45, 0.45)),
                      float(rng.uniform(-0.45, 0.45)), float(rng.uniform(0, 180))))
    img = ellipses(h, w, table)
    return img / img.max()


def beating(h: int, w: int, t: int, amplitude: float = 0.3) -> np.ndarray:
    """Static Shepp-Logan body with a bright disk whose radius oscillates
    as (1 + amplitude * cos(2 pi t / T))."""
    body = ellipses(h, w, SHEPP_LOGAN_ELLIPSES[:2])
    frames = []
    for k in range(t):
        r = 0.18 * (1.0 + amplitude * np.cos(2.0 * np.pi * k / t))
        heart = ellipses(h, w, [(0.6, r, r, 0.1, 0.05, 0.0)])
        frames.append(np.clip(body + heart, 0.0, 1.0))
    return np.stack(frames)


def _augment(frames: np.ndarray, spec: PhantomSpec, rng: np.random.Generator) -> np.ndarray:
    angle = float(rng.uniform(-spec.rotation, spec.rotation)) if spec.rotation else 0.0
    shift = rng.uniform(-spec.shift, spec.shift, size=2) if spec.shift else np.zeros(2)
    out = []
    for f in frames:
        g = ndimage.rotate(f, angle, reshape=False, order=1, mode="constant") if angle else f
        g = ndimage.shift(g, shift, order=1, mode="constant") if np.any(shift) else g
        out.append(np.clip(g, 0.0, 1.0))
    return np.stack(out)


def generate_phantoms(spec: PhantomSpec, rng: np.random.Generator) -> Dataset:
    """``spec.count`` augmented samples, magnitudes in [0, 1], real-valued."""
    samples = []
    for _ in range(spec.count):
        if spec.kind == "shepp_logan":
            base = np.repeat(shepp_logan(spec.h, spec.w)[None], spec.t, axis=0)
        elif spec.kind == "piecewise_blobs":
            base = np.repeat(_blobs(spec.h, spec.w, rng)[None], spec.t, axis=0)
        else:
            base = beating(spec.h, spec.w, spec.t)
        samples.append(ImageStack(_augment(base, spec, rng)))
    ids = tuple(f"{spec.kind}_{i:03d}" for i in range(spec.count))
    return Dataset(tuple(samples), ids)
