"""Shared domain types: image stacks, Cartesian line masks, candidate spaces,
datasets and the seeded random-stream policy.

Array convention: image data is held as complex128 arrays of shape
``(T, H, W)``. Batched helpers accept any number of leading axes, i.e.
``(..., T, H, W)``. k-space is stored unshifted (DC at index 0).
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Sequence

import numpy as np

ROWS = "rows"
COLUMNS = "columns"
_ORIENTATIONS = (ROWS, COLUMNS)


@dataclass(frozen=True)
class ImageStack:
    """Complex image grid of ``T`` frames of size ``H x W``."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3:
            raise ValueError(f"expected (T, H, W) data, got shape {arr.shape}")
        arr = np.array(arr, dtype=np.complex128)
        if not np.all(np.isfinite(arr)):
            raise ValueError("image data contains NaN or Inf")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def t(self) -> int:
        return self.data.shape[0]

    @property
    def h(self) -> int:
        return self.data.shape[1]

    @property
    def w(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        """Grid dimensions as ``(H, W, T)``."""
        return (self.h, self.w, self.t)

    def magnitude(self) -> np.ndarray:
        return np.abs(self.data)

    def save(self, path) -> None:
        """Write ``path`` (float32 interleaved re/im, row-major H x W x T)
        plus a ``.json`` sidecar next to it."""
        path = Path(path)
        hwt = np.transpose(self.data, (1, 2, 0))
        buf = np.empty(hwt.shape + (2,), dtype="<f4")
        buf[..., 0] = hwt.real
        buf[..., 1] = hwt.imag
        path.write_bytes(buf.tobytes(order="C"))
        sidecar = {"h": self.h, "w": self.w, "t": self.t, "complex": True}
        _sidecar_path(path).write_text(json.dumps(sidecar))

    @classmethod
    def load(cls, path) -> "ImageStack":
        path = Path(path)
        meta = json.loads(_sidecar_path(path).read_text())
        h, w, t = int(meta["h"]), int(meta["w"]), int(meta["t"])
        raw = np.frombuffer(path.read_bytes(), dtype="<f4")
        if meta.get("complex", True):
            if raw.size != 2 * h * w * t:
                raise ValueError(f"{path}: size mismatch with sidecar")
            raw = raw.reshape(h, w, t, 2)
            hwt = raw[..., 0].astype(np.float64) + 1j * raw[..., 1].astype(np.float64)
        else:
            if raw.size != h * w * t:
                raise ValueError(f"{path}: size mismatch with sidecar")
            hwt = raw.reshape(h, w, t).astype(np.complex128)
        return cls(np.transpose(hwt, (2, 0, 1)))


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".json")


def as_array(x) -> np.ndarray:
    """Return ``(..., T, H, W)`` complex data from an ImageStack or array."""
    if isinstance(x, ImageStack):
        return x.data
    arr = np.asarray(x)
    if arr.ndim == 2:
        arr = arr[None]
    return arr.astype(np.complex128, copy=False)


# --------------------------------------------------------------------------
# frequency indexing

def signed_frequency(index, n: int):
    """Signed frequency of storage index ``index`` on an axis of length ``n``."""
    index = np.asarray(index)
    return np.where(index < (n + 1) // 2, index, index - n)


def centered_distance(n: int) -> np.ndarray:
    """|signed frequency| of every storage index along an axis of length n."""
    return np.abs(signed_frequency(np.arange(n), n))


def centered_position(index, n: int):
    """Position of a storage index in the fftshift-ed (centered) ordering."""
    return (np.asarray(index) + n // 2) % n


def storage_index(position, n: int):
    """Inverse of :func:`centered_position`."""
    return (np.asarray(position) - n // 2) % n


def low_to_high_order(n: int) -> list[int]:
    """Storage indices ordered by distance to DC; positive side first on ties."""
    order = [0]
    for k in range(1, n // 2 + 1):
        for f in (k, -k):
            idx = f % n
            if idx not in order:
                order.append(idx)
    return order


# --------------------------------------------------------------------------
# masks

@dataclass(frozen=True)
class CartesianMask:
    """Ordered set of acquired readout lines.

    ``lines`` holds ``(frame, line)`` pairs in acquisition order; ``line``
    indexes the masked axis in storage order (DC at 0). With
    ``orientation="rows"`` a line is a full row (masked axis H), otherwise
    a full column (masked axis W).
    """

    h: int
    w: int
    t: int = 1
    lines: tuple[tuple[int, int], ...] = ()
    orientation: str = ROWS

    def __post_init__(self):
        if self.orientation not in _ORIENTATIONS:
            raise ValueError(f"orientation must be one of {_ORIENTATIONS}")
        if min(self.h, self.w, self.t) < 1:
            raise ValueError("grid dimensions must be positive")
        lines = tuple((int(f), int(l)) for f, l in self.lines)
        if len(set(lines)) != len(lines):
            raise ValueError("duplicate (frame, line) pairs in mask")
        n = self.n_lines
        for f, l in lines:
            if not (0 <= f < self.t and 0 <= l < n):
                raise ValueError(f"line {(f, l)} out of range for {n} lines x {self.t} frames")
        object.__setattr__(self, "lines", lines)

    @classmethod
    def empty_like(cls, mask: "CartesianMask") -> "CartesianMask":
        return cls(mask.h, mask.w, mask.t, (), mask.orientation)

    @property
    def n_lines(self) -> int:
        """Number of candidate lines per frame."""
        return self.h if self.orientation == ROWS else self.w

    @property
    def total_lines(self) -> int:
        return self.n_lines * self.t

    @property
    def readout_length(self) -> int:
        return self.w if self.orientation == ROWS else self.h

    def __len__(self) -> int:
        return len(self.lines)

    def __contains__(self, item) -> bool:
        return tuple(item) in set(self.lines)

    def prefix(self, n: int) -> "CartesianMask":
        return CartesianMask(self.h, self.w, self.t, self.lines[:n], self.orientation)

    def add(self, *lines: tuple[int, int]) -> "CartesianMask":
        return CartesianMask(self.h, self.w, self.t, self.lines + tuple(lines), self.orientation)

    def line_indicator(self) -> np.ndarray:
        """Boolean ``(T, n_lines)`` table of acquired lines."""
        ind = np.zeros((self.t, self.n_lines), dtype=bool)
        for f, l in self.lines:
            ind[f, l] = True
        return ind

    def is_nested_in(self, other: "CartesianMask") -> bool:
        return other.lines[: len(self.lines)] == self.lines

    def to_json(self) -> dict:
        return {
            "orientation": self.orientation,
            "lines": [list(p) for p in self.lines],
            "h": self.h,
            "w": self.w,
            "t": self.t,
        }

    @classmethod
    def from_json(cls, obj: dict, h: int | None = None, w: int | None = None,
                  t: int | None = None) -> "CartesianMask":
        h = obj.get("h", h)
        w = obj.get("w", w)
        t = obj.get("t", t if t is not None else 1)
        if h is None or w is None:
            raise ValueError("mask JSON lacks grid dims; pass h and w")
        return cls(int(h), int(w), int(t), tuple(tuple(p) for p in obj["lines"]),
                   obj.get("orientation", ROWS))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path, **dims) -> "CartesianMask":
        return cls.from_json(json.loads(Path(path).read_text()), **dims)


def mask_to_indicator(mask: CartesianMask) -> np.ndarray:
    """Binary ``(T, H, W)`` grid, 1 on every acquired line."""
    ind = mask.line_indicator()
    if mask.orientation == ROWS:
        grid = np.broadcast_to(ind[:, :, None], (mask.t, mask.h, mask.w))
    else:
        grid = np.broadcast_to(ind[:, None, :], (mask.t, mask.h, mask.w))
    return grid.astype(np.float64)


def sampling_rate(mask: CartesianMask) -> float:
    return len(mask) / mask.total_lines


def full_mask(h: int, w: int, t: int = 1, orientation: str = ROWS) -> CartesianMask:
    n = h if orientation == ROWS else w
    lines = tuple((f, l) for l in low_to_high_order(n) for f in range(t))
    return CartesianMask(h, w, t, lines, orientation)


# --------------------------------------------------------------------------
# candidate spaces and datasets

@dataclass(frozen=True)
class CandidateSpace:
    """Family of candidate elements with unit cost each and a budget.

    ``family`` items are hashable (``(frame, line)`` pairs for masks, plain
    integers for synthetic set functions). ``partition`` optionally groups
    candidate indices per frame.
    """

    family: tuple[Hashable, ...]
    budget: int
    partition: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        fam = tuple(self.family)
        if len(set(fam)) != len(fam):
            raise ValueError("candidates must be pairwise distinct")
        if not 0 <= self.budget <= len(fam):
            raise ValueError("budget must lie in [0, number of candidates]")
        object.__setattr__(self, "family", fam)
        if self.partition is not None:
            part = tuple(tuple(int(i) for i in g) for g in self.partition)
            flat = sorted(i for g in part for i in g)
            if flat != list(range(len(fam))):
                raise ValueError("partition must cover the family disjointly")
            object.__setattr__(self, "partition", part)

    def __len__(self) -> int:
        return len(self.family)

    def cost(self, selection: Iterable) -> int:
        return len(tuple(selection))

    @classmethod
    def from_mask_dims(cls, h: int, w: int, t: int = 1, budget: int | None = None,
                       orientation: str = ROWS) -> "CandidateSpace":
        """Every ``(frame, line)`` pair, partitioned per frame. The budget
        counts all lines of the final mask, initial lines included."""
        n = h if orientation == ROWS else w
        family = tuple((f, l) for f in range(t) for l in range(n))
        partition = tuple(tuple(range(f * n, (f + 1) * n)) for f in range(t))
        return cls(family, n * t if budget is None else budget, partition)


@dataclass(frozen=True)
class Dataset:
    samples: tuple[ImageStack, ...]
    ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        samples = tuple(s if isinstance(s, ImageStack) else ImageStack(s) for s in self.samples)
        if not samples:
            raise ValueError("dataset is empty")
        if len({s.shape for s in samples}) != 1:
            raise ValueError("dataset samples must share dimensions")
        ids = tuple(self.ids) or tuple(f"img{i:04d}" for i in range(len(samples)))
        if len(ids) != len(samples) or len(set(ids)) != len(ids):
            raise ValueError("ids must be unique and match samples")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.samples[0].shape

    def stack(self, indices: Sequence[int] | None = None) -> np.ndarray:
        """Data of the selected samples as one ``(B, T, H, W)`` array."""
        if indices is None:
            indices = range(len(self.samples))
        return np.stack([self.samples[i].data for i in indices])

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(tuple(self.samples[i] for i in indices), tuple(self.ids[i] for i in indices))

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for sid, sample in zip(self.ids, self.samples):
            sample.save(directory / f"{sid}.bin")

    @classmethod
    def load(cls, directory) -> "Dataset":
        paths = sorted(Path(directory).glob("*.bin"))
        if not paths:
            raise ValueError(f"no .bin images in {directory}")
        return cls(tuple(ImageStack.load(p) for p in paths), tuple(p.stem for p in paths))


# --------------------------------------------------------------------------
# randomness

@dataclass(frozen=True)
class RngPolicy:
    """Derives independent, reproducible generators from one 64-bit seed."""

    seed: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    def generator(self, label: str = "", round: int = 0) -> np.random.Generator:
        key = (zlib.crc32(label.encode()), int(round))
        return np.random.default_rng(np.random.SeedSequence(int(self.seed), spawn_key=key))
