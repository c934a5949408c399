"""Image-quality metrics on magnitude images and curve/AUC aggregation."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import as_array

PSNR_CAP_DB = 300.0
METRICS = ("psnr", "ssim", "nmse")
# metric -> True when larger is better
HIGHER_IS_BETTER = {"psnr": True, "ssim": True, "nmse": False}


def _magnitudes(x, x_hat):
    a = np.abs(as_array(x))
    b = np.abs(as_array(x_hat))
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(x, x_hat, batched: bool = False):
    """PSNR in dB with peak = max |x|; exact matches are capped at 300 dB.

    With ``batched=True`` the leading axis indexes independent samples and an
    array of scores is returned.
    """
    a, b = _magnitudes(x, x_hat)
    axes = tuple(range(1 if batched else 0, a.ndim))
    peak = a.max(axis=axes)
    if np.any(peak == 0):
        raise ValueError("PSNR undefined for an all-zero ground truth")
    mse = np.mean((a - b) ** 2, axis=axes)
    with np.errstate(divide="ignore"):
        val = 10.0 * np.log10(peak**2 / mse)
    val = np.minimum(np.where(mse == 0, PSNR_CAP_DB, val), PSNR_CAP_DB)
    return val if batched else float(val)


def nmse(x, x_hat, batched: bool = False):
    a, b = _magnitudes(x, x_hat)
    axes = tuple(range(1 if batched else 0, a.ndim))
    val = np.sum((a - b) ** 2, axis=axes) / np.sum(a**2, axis=axes)
    return val if batched else float(val)


def _ssim_frames(a: np.ndarray, b: np.ndarray, data_range: np.ndarray,
                 sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03) -> np.ndarray:
    """Mean local SSIM of each frame in ``(N, H, W)`` stacks."""
    radius = int(3.5 * sigma + 0.5)
    win = 2 * radius + 1
    if min(a.shape[-2:]) < win:
        raise ValueError(f"image smaller than the {win}x{win} SSIM window")

    def blur(v):
        return gaussian_filter(v, sigma=(0, sigma, sigma), truncate=3.5, mode="reflect")

    mu_a, mu_b = blur(a), blur(b)
    saa = blur(a * a) - mu_a * mu_a
    sbb = blur(b * b) - mu_b * mu_b
    sab = blur(a * b) - mu_a * mu_b
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    c1 = c1[:, None, None]
    c2 = c2[:, None, None]
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (saa + sbb + c2)
    smap = num / den
    pad = (win - 1) // 2
    return smap[:, pad:-pad, pad:-pad].mean(axis=(-2, -1))


def ssim(x, x_hat, data_range: float | None = None, batched: bool = False):
    """Gaussian-window SSIM (11x11, sigma 1.5, K1=0.01, K2=0.03) on magnitudes.

    ``data_range`` defaults to max |x| of each sample. Dynamic stacks are
    scored frame-wise and averaged.
    """
    a, b = _magnitudes(x, x_hat)
    if not batched:
        a, b = a[None], b[None]
    n = a.shape[0]
    if data_range is None:
        rng = a.reshape(n, -1).max(axis=1)
    else:
        rng = np.full(n, float(data_range))
    if np.any(rng == 0):
        raise ValueError("SSIM data range is zero")
    frames = a.shape[1:-2]
    nf = int(np.prod(frames)) if frames else 1
    a2 = a.reshape((n * nf,) + a.shape[-2:])
    b2 = b.reshape((n * nf,) + b.shape[-2:])
    vals = _ssim_frames(a2, b2, np.repeat(rng, nf)).reshape(n, nf).mean(axis=1)
    return vals if batched else float(vals[0])


def score(metric: str, x, x_hat, batched: bool = False):
    if metric == "psnr":
        return psnr(x, x_hat, batched)
    if metric == "ssim":
        return ssim(x, x_hat, batched=batched)
    if metric == "nmse":
        return nmse(x, x_hat, batched)
    raise ValueError(f"unknown metric {metric!r}")


def signed_score(metric: str, x, x_hat, batched: bool = False):
    """Metric oriented so that larger is always better (NMSE is negated)."""
    v = score(metric, x, x_hat, batched)
    return v if HIGHER_IS_BETTER[metric] else -v


# --------------------------------------------------------------------------
# curves

@dataclass(frozen=True)
class MetricCurve:
    rates: tuple[float, ...]
    scores: tuple[float, ...]
    metric: str = "psnr"
    image_id: str = ""

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        scores = tuple(float(s) for s in self.scores)
        if len(rates) != len(scores):
            raise ValueError("rates and scores differ in length")
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise ValueError("sampling rates must be strictly increasing")
        if not all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "scores", scores)

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.rates, self.scores))

    def acceleration_view(self) -> tuple[np.ndarray, np.ndarray]:
        """(1/rate, score) sorted by increasing acceleration factor."""
        r = np.asarray(self.rates)
        if np.any(r <= 0):
            raise ValueError("acceleration undefined at rate 0")
        acc = 1.0 / r[::-1]
        return acc, np.asarray(self.scores)[::-1]

    def to_csv_rows(self) -> list[dict]:
        return [{"rate": r, "score": s, "image_id": self.image_id, "metric": self.metric}
                for r, s in self.points]


def _trapezoid(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def auc(curve: MetricCurve, view: str = "rate") -> float:
    """Trapezoidal area under the curve over sampling rate (``view="rate"``)
    or acceleration factor (``view="accel"``); not normalized by range."""
    if len(curve.rates) < 2:
        raise ValueError("AUC needs at least two points")
    if view == "rate":
        return _trapezoid(np.asarray(curve.rates), np.asarray(curve.scores))
    if view == "accel":
        return _trapezoid(*curve.acceleration_view())
    raise ValueError(f"unknown view {view!r}")


def aggregate_per_image(curves: Iterable[MetricCurve], view: str = "rate") -> tuple[float, float]:
    """Mean and sample standard deviation (ddof=1, 0 for one image) of per-image AUCs."""
    curves = list(curves)
    if not curves:
        raise ValueError("no curves to aggregate")
    grids = {c.rates for c in curves}
    if len(grids) != 1:
        raise ValueError("all curves must share the same rate grid")
    values = np.array([auc(c, view) for c in curves])
    std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    return float(values.mean()), std


def curves_to_csv(curves: Sequence[MetricCurve]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["rate", "score", "image_id", "metric"])
    writer.writeheader()
    for c in curves:
        writer.writerows(c.to_csv_rows())
    return buf.getvalue()


def curves_from_csv(text: str) -> list[MetricCurve]:
    grouped: dict[tuple[str, str], list[tuple[float, float]]] = {}
    for row in csv.DictReader(io.StringIO(text)):
        grouped.setdefault((row["image_id"], row["metric"]), []).append(
            (float(row["rate"]), float(row["score"])))
    out = []
    for (image_id, metric), pts in grouped.items():
        pts.sort()
        out.append(MetricCurve(tuple(p[0] for p in pts), tuple(p[1] for p in pts), metric, image_id))
    return out
