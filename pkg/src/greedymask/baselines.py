"""Non-greedy mask generators: variable-density sampling, the coherence
(PSF sidelobe) selection, structured low-frequency/golden-ratio orders and a
learning-based grid search over density parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import (ROWS, CartesianMask, Dataset, RngPolicy, centered_distance, low_to_high_order,
                   storage_index)
from .metrics import signed_score
from .recon import ReconConfig, reconstruct
from .transform import ForwardModel, forward, psf_sidelobe_ratio

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0
DENSITY_KINDS = ("polynomial", "gaussian", "uniform")


@dataclass(frozen=True)
class DensitySpec:
    """Line-wise sampling density.

    polynomial: p(line) ~ (1 - r / r_max) ** decay, clipped at 0, with r the
    distance of the line to DC and r_max = n/2.
    gaussian:   p(line) ~ exp(-r^2 / (2 (width * n)^2)).
    ``center_lines`` lowest frequencies are always acquired first.
    """

    kind: str = "polynomial"
    decay: float = 2.0
    width: float = 0.15
    center_lines: int = 0

    def __post_init__(self):
        if self.kind not in DENSITY_KINDS:
            raise ValueError(f"unknown density kind {self.kind!r}")
        if self.kind == "polynomial" and not self.decay > 1:
            raise ValueError("polynomial decay must be > 1")
        if self.kind == "gaussian" and not self.width > 0:
            raise ValueError("gaussian width must be positive")
        if self.center_lines < 0:
            raise ValueError("center_lines must be non-negative")

    def to_json(self) -> dict:
        return {"kind": self.kind, "decay": self.decay, "width": self.width,
                "center_lines": self.center_lines}


def line_weights(spec: DensitySpec, n: int) -> np.ndarray:
    """Unnormalized density over the ``n`` storage-ordered lines."""
    r = centered_distance(n).astype(float)
    if spec.kind == "polynomial":
        return np.clip(1.0 - r / (n / 2.0), 0.0, None) ** spec.decay
    if spec.kind == "gaussian":
        return np.exp(-(r**2) / (2.0 * (spec.width * n) ** 2))
    return np.ones(n)


def line_pmf(spec: DensitySpec, n: int) -> np.ndarray:
    """Probability of each line, zero on the deterministic center lines."""
    w = line_weights(spec, n)
    w[low_to_high_order(n)[: spec.center_lines]] = 0.0
    total = w.sum()
    if total <= 0:
        return np.zeros(n)
    return w / total


def _draw_frame(spec: DensitySpec, n: int, count: int, rng: np.random.Generator) -> list[int]:
    center = low_to_high_order(n)[: min(spec.center_lines, count)]
    chosen = list(center)
    w = line_weights(spec, n)
    w[chosen] = 0.0
    avail = np.ones(n, dtype=bool)
    avail[chosen] = False
    while len(chosen) < count:
        p = np.where(avail, w, 0.0)
        if p.sum() <= 0:
            # remaining lines carry no density mass; fall back to uniform
            p = avail.astype(float)
        line = int(rng.choice(n, p=p / p.sum()))
        chosen.append(line)
        avail[line] = False
    return chosen


def _per_frame_budget(budget: int, t: int) -> list[int]:
    base, extra = divmod(budget, t)
    return [base + (1 if f < extra else 0) for f in range(t)]


def sample_vds(spec: DensitySpec, budget: int, dims: tuple[int, int, int],
               rng: np.random.Generator, orientation: str = ROWS) -> CartesianMask:
    """Draw a mask of ``budget`` lines: center lines first, then sequential
    draws from the density restricted to lines not yet acquired.

    ``dims`` is ``(H, W, T)``; dynamic budgets are spread evenly over frames.
    """
    h, w, t = dims
    n = h if orientation == ROWS else w
    if budget > n * t:
        raise ValueError(f"budget {budget} exceeds {n * t} lines")
    counts = _per_frame_budget(budget, t)
    if spec.center_lines > min(counts):
        raise ValueError("center_lines exceeds the per-frame budget")
    per_frame = [_draw_frame(spec, n, c, rng) for c in counts]
    lines = []
    for i in range(max(counts, default=0)):
        for f in range(t):
            if i < len(per_frame[f]):
                lines.append((f, per_frame[f][i]))
    return CartesianMask(h, w, t, tuple(lines), orientation)


def select_min_coherence(masks: Sequence[CartesianMask]) -> tuple[CartesianMask, list[float]]:
    """Mask with the smallest PSF sidelobe-to-peak ratio (first on ties)."""
    proxies = [psf_sidelobe_ratio(m) for m in masks]
    return masks[int(np.argmin(proxies))], proxies


def coherence_vd(spec: DensitySpec, budget: int, dims: tuple[int, int, int], n_candidates: int,
                 rng: np.random.Generator, orientation: str = ROWS) -> CartesianMask:
    """Best of ``n_candidates`` density draws under the PSF sidelobe proxy."""
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    masks = [sample_vds(spec, budget, dims, rng, orientation) for _ in range(n_candidates)]
    return select_min_coherence(masks)[0]


def lowpass_mask(budget: int, dims: tuple[int, int, int], orientation: str = ROWS) -> CartesianMask:
    """The ``budget`` lines closest to DC, center-outward, positive side first.

    Dynamic stacks receive the same order in every frame, frame-interleaved.
    """
    h, w, t = dims
    n = h if orientation == ROWS else w
    if budget > n * t:
        raise ValueError(f"budget {budget} exceeds {n * t} lines")
    order = [(f, l) for l in low_to_high_order(n) for f in range(t)]
    return CartesianMask(h, w, t, tuple(order[:budget]), orientation)


low_to_high = lowpass_mask


def golden_positions(budget: int, n: int) -> list[int]:
    """Centered positions: line t (t = 1, 2, ...) targets
    round(frac(t / phi) * (n - 1)) and takes the nearest free position,
    checking the higher position first at equal distance."""
    free = np.ones(n, dtype=bool)
    out = []
    for step in range(1, budget + 1):
        target = int(round(((step / GOLDEN_RATIO) % 1.0) * (n - 1)))
        for d in range(n):
            hit = next((p for p in (target + d, target - d) if 0 <= p < n and free[p]), None)
            if hit is not None:
                break
        free[hit] = False
        out.append(hit)
    return out


def golden_cartesian(budget: int, dims: tuple[int, int, int], orientation: str = ROWS) -> CartesianMask:
    """Golden-ratio line order (deterministic). Positions refer to the
    centered k-space ordering and are stored as unshifted indices."""
    h, w, t = dims
    n = h if orientation == ROWS else w
    if budget > n * t:
        raise ValueError(f"budget {budget} exceeds {n * t} lines")
    counts = _per_frame_budget(budget, t)
    per_frame = [[int(storage_index(p, n)) for p in golden_positions(c, n)] for c in counts]
    lines = [(f, per_frame[f][i]) for i in range(max(counts, default=0))
             for f in range(t) if i < len(per_frame[f])]
    return CartesianMask(h, w, t, tuple(lines), orientation)


def _mask_score(mask: CartesianMask, data: np.ndarray, recon: ReconConfig, metric: str) -> float:
    y = forward(ForwardModel(mask), data)
    x_hat = reconstruct(recon, y, mask)
    return float(np.mean(signed_score(metric, data, x_hat, batched=True)))


def lbvd_grid_search(dataset: Dataset, recon: ReconConfig, metric: str, grid: Sequence[DensitySpec],
                     budget: int, draws_per_cell: int, rng: RngPolicy | int = 0,
                     orientation: str = ROWS) -> tuple[DensitySpec, list[dict]]:
    """Average the metric of ``draws_per_cell`` random masks per density cell
    on ``dataset`` and return the best cell with the full table.

    Cell ``i`` draws from its own stream, so the table does not depend on the
    evaluation order of the cells.
    """
    if not grid:
        raise ValueError("empty grid")
    policy = rng if isinstance(rng, RngPolicy) else RngPolicy(int(rng))
    data = dataset.stack()
    table = []
    for i, spec in enumerate(grid):
        g = policy.generator("lbvd", i)
        scores = [_mask_score(sample_vds(spec, budget, dataset.shape, g, orientation), data, recon, metric)
                  for _ in range(draws_per_cell)]
        table.append({"spec": spec.to_json(), "score": float(np.mean(scores)),
                      "std": float(np.std(scores))})
    best = int(np.argmax([row["score"] for row in table]))
    return grid[best], table


def density_grid(kinds_params: Sequence[tuple[str, float]], center_lines: Sequence[int]) -> list[DensitySpec]:
    """Cartesian product of (kind, decay-or-width) pairs and center-line counts."""
    out = []
    for kind, param in kinds_params:
        for c in center_lines:
            base = DensitySpec(kind=kind, center_lines=c)
            out.append(replace(base, decay=param) if kind == "polynomial" else replace(base, width=param))
    return out

