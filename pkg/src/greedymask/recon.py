"""Reconstruction algorithms ``x_hat = f(y, mask)``.

All solvers take zero-filled k-space observations of shape ``(..., T, H, W)``
(``(..., C, T, H, W)`` with coil maps) and return images of shape
``(..., T, H, W)``. Leading batch axes are solved independently: each sample
keeps its own stopping criterion, so batching never changes a result.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import CartesianMask, ImageStack, as_array, mask_to_indicator
from .transform import CoilSensitivities, ForwardModel, adjoint, fft2c, forward, ifft2c
from .wavelet import haar2, ihaar2

log = logging.getLogger(__name__)

ALGORITHMS = ("zero_fill", "ista_wavelet", "fista_wavelet", "tv_pd", "ista_xf")


@dataclass(frozen=True)
class ReconConfig:
    algorithm: str = "ista_wavelet"
    lam: float = 1e-3
    alpha: float | str = 1.0
    max_iters: int = 200
    tol: float = 1e-6
    apply_dc: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be non-negative")
        if self.alpha != "auto" and not float(self.alpha) > 0:
            raise ValueError("alpha must be positive or 'auto'")

    def to_json(self) -> dict:
        return {"algorithm": self.algorithm, "lambda": self.lam, "alpha": self.alpha,
                "max_iters": self.max_iters, "tol": self.tol, "apply_dc": self.apply_dc}

    @classmethod
    def from_json(cls, obj: dict) -> "ReconConfig":
        allowed = {"algorithm", "lambda", "alpha", "max_iters", "tol", "apply_dc"}
        unknown = set(obj) - allowed
        if unknown:
            raise ValueError(f"unknown recon fields: {sorted(unknown)}")
        kw = dict(obj)
        if "lambda" in kw:
            kw["lam"] = kw.pop("lambda")
        return cls(**kw)


@dataclass
class ReconInfo:
    converged: np.ndarray
    iterations: np.ndarray
    objective: list[float] = field(default_factory=list)

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))


# --------------------------------------------------------------------------
# elementary pieces

def soft_threshold(v, lam: float):
    """sign(v) * max(|v| - lam, 0); for complex input the phase is kept."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    v = np.asarray(v)
    mag = np.abs(v)
    scale = np.maximum(mag - lam, 0.0) / np.where(mag > 0, mag, 1.0)
    out = v * scale
    return out if out.ndim else out[()]


_haar = haar2
_ihaar = ihaar2


def _tfft(x):
    return np.fft.fft(x, axis=-3, norm="ortho")


def _itfft(z):
    return np.fft.ifft(z, axis=-3, norm="ortho")


def _model(mask: CartesianMask, coils: CoilSensitivities | None) -> ForwardModel:
    return ForwardModel(mask, 0.0, coils)


def data_fidelity(x, y, mask: CartesianMask, coils: CoilSensitivities | None = None):
    """0.5 * ||A x - y||^2 per sample."""
    model = _model(mask, coils)
    r = forward(model, as_array(x)) - np.asarray(y) * model.indicator
    return 0.5 * _sum_trailing(np.abs(r) ** 2, 3 if coils is None else 4)


def data_fidelity_grad(x, y, mask: CartesianMask, coils: CoilSensitivities | None = None):
    """A^H (A x - y): gradient of :func:`data_fidelity` w.r.t. (Re x, Im x)."""
    model = _model(mask, coils)
    return adjoint(model, forward(model, as_array(x)) - np.asarray(y))


def data_consistency(x_hat, y, mask: CartesianMask) -> np.ndarray:
    """Replace observed k-space lines of ``x_hat`` by the observation ``y``."""
    ind = mask_to_indicator(mask)
    k = fft2c(as_array(x_hat))
    return ifft2c((1.0 - ind) * k + ind * np.asarray(y))


def ista_step(x_t, y, mask: CartesianMask, alpha: float, lam: float,
              W: tuple[Callable, Callable] | None = None,
              coils: CoilSensitivities | None = None) -> np.ndarray:
    """One proximal-gradient step with an orthonormal sparsifier ``W=(fwd, inv)``."""
    fwd, inv = W if W is not None else (_haar, _ihaar)
    g = data_fidelity_grad(x_t, y, mask, coils)
    return inv(soft_threshold(fwd(as_array(x_t) - alpha * g), alpha * lam))


# --------------------------------------------------------------------------
# solvers

def _sum_trailing(a: np.ndarray, n: int) -> np.ndarray:
    return np.sum(a, axis=tuple(range(a.ndim - n, a.ndim)))


def _lipschitz(coils: CoilSensitivities | None) -> float:
    if coils is None:
        return 1.0
    return float(np.max(np.sum(np.abs(coils.maps) ** 2, axis=0)))


def _step_size(cfg: ReconConfig, coils) -> float:
    if cfg.alpha == "auto":
        return 1.0 / _lipschitz(coils)
    return float(cfg.alpha)


class _Tracker:
    """Per-sample relative-change stopping with best-iterate bookkeeping."""

    def __init__(self, x0: np.ndarray, obj0: np.ndarray, tol: float):
        self.tol = tol
        self.best = x0.copy()
        self.best_obj = np.array(obj0, dtype=float)
        self.obj = np.array(obj0, dtype=float)
        self.active = np.ones(self.obj.shape, dtype=bool)
        self.iterations = np.zeros(self.obj.shape, dtype=int)
        self.trace = [float(np.sum(obj0))]

    def freeze(self, new: np.ndarray, old: np.ndarray) -> np.ndarray:
        return np.where(self.active[..., None, None, None], new, old)

    def update(self, x: np.ndarray, obj: np.ndarray) -> bool:
        if not np.all(np.isfinite(obj)):
            raise FloatingPointError("non-finite objective during reconstruction")
        obj = np.where(self.active, obj, self.obj)
        self.iterations += self.active
        better = self.active & (obj <= self.best_obj)
        self.best = np.where(better[..., None, None, None], x, self.best)
        self.best_obj = np.where(better, obj, self.best_obj)
        rel = np.abs(obj - self.obj) / np.maximum(np.abs(self.obj), np.finfo(float).tiny)
        done = self.active & (rel <= self.tol)
        self.obj = obj
        self.active = self.active & ~done
        self.trace.append(float(np.sum(obj)))
        return bool(self.active.any())

    def info(self) -> ReconInfo:
        return ReconInfo(~self.active, self.iterations, self.trace)


def _proximal_gradient(y, mask, coils, lam, alpha, max_iters, tol, fwd, inv, accelerate):
    model = _model(mask, coils)
    ind = model.indicator
    y = np.asarray(y) * ind
    n_obs_axes = 3 if coils is None else 4

    def fidelity(ax):
        return 0.5 * _sum_trailing(np.abs(ax - y) ** 2, n_obs_axes)

    x = adjoint(model, y)
    ax = forward(model, x)
    tracker = _Tracker(x, fidelity(ax) + lam * _sum_trailing(np.abs(fwd(x)), 3), tol)
    z, az, t = x, ax, 1.0
    for _ in range(max_iters):
        g = adjoint(model, az - y)
        coef = soft_threshold(fwd(z - alpha * g), alpha * lam)
        x_new = tracker.freeze(inv(coef), x)
        ax_new = forward(model, x_new)
        # W is orthonormal, so W(x_new) == coef for every still-active sample
        obj = fidelity(ax_new) + lam * _sum_trailing(np.abs(coef), 3)
        if accelerate:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            beta = (t - 1.0) / t_new
            z = x_new + beta * (x_new - x)
            az = ax_new + beta * (ax_new - ax)
            t = t_new
        else:
            z, az = x_new, ax_new
        x, ax = x_new, ax_new
        if not tracker.update(x, obj):
            break
    return tracker.best, tracker.info()


def _grad2d(x):
    gy = np.zeros_like(x)
    gx = np.zeros_like(x)
    gy[..., :-1, :] = x[..., 1:, :] - x[..., :-1, :]
    gx[..., :, :-1] = x[..., :, 1:] - x[..., :, :-1]
    return np.stack((gy, gx), axis=0)


def _div2d(p):
    py, px = p[0], p[1]
    dy = np.zeros_like(py)
    dx = np.zeros_like(px)
    dy[..., 0, :] = py[..., 0, :]
    dy[..., 1:-1, :] = py[..., 1:-1, :] - py[..., :-2, :]
    dy[..., -1, :] = -py[..., -2, :]
    dx[..., :, 0] = px[..., :, 0]
    dx[..., :, 1:-1] = px[..., :, 1:-1] - px[..., :, :-2]
    dx[..., :, -1] = -px[..., :, -2]
    return dy + dx


def tv_norm(x) -> np.ndarray:
    """Anisotropic TV of real and imaginary parts, summed, per sample."""
    g = _grad2d(as_array(x))
    return _sum_trailing(np.abs(g.real) + np.abs(g.imag), 3).sum(axis=0)


def _tv_pd(y, mask, lam, max_iters, tol):
    ind = mask_to_indicator(mask)
    y = np.asarray(y) * ind
    tau = sigma = 1.0 / np.sqrt(8.0)

    def objective(x):
        r = fft2c(x) * ind - y
        return 0.5 * _sum_trailing(np.abs(r) ** 2, 3) + lam * tv_norm(x)

    x = ifft2c(y)
    x_bar = x
    p = np.zeros((2,) + x.shape, dtype=complex)
    tracker = _Tracker(x, objective(x), tol)
    for _ in range(max_iters):
        q = p + sigma * _grad2d(x_bar)
        p = np.clip(q.real, -lam, lam) + 1j * np.clip(q.imag, -lam, lam)
        v = x + tau * _div2d(p)
        x_new = ifft2c((fft2c(v) + tau * y) / (1.0 + tau * ind))
        x_new = tracker.freeze(x_new, x)
        x_bar = 2.0 * x_new - x
        x = x_new
        if not tracker.update(x, objective(x)):
            break
    return tracker.best, tracker.info()


def reconstruct(cfg: ReconConfig, y, mask: CartesianMask,
                coils: CoilSensitivities | None = None, return_info: bool = False):
    """Reconstruct images from masked k-space ``y``.

    Non-convergence within ``max_iters`` is reported through ``ReconInfo``
    (``return_info=True``) and the best iterate is returned.
    """
    y = np.asarray(y)
    alg = cfg.algorithm
    if alg == "zero_fill":
        x = adjoint(_model(mask, coils), y)
        info = ReconInfo(np.ones(x.shape[:-3], bool), np.zeros(x.shape[:-3], int))
    elif alg in ("ista_wavelet", "fista_wavelet"):
        x, info = _proximal_gradient(y, mask, coils, cfg.lam, _step_size(cfg, coils),
                                     cfg.max_iters, cfg.tol, _haar, _ihaar,
                                     accelerate=alg == "fista_wavelet")
    elif alg == "ista_xf":
        if mask.t < 2:
            raise ValueError("ista_xf requires a dynamic stack (T >= 2)")
        x, info = _proximal_gradient(y, mask, coils, cfg.lam, _step_size(cfg, coils),
                                     cfg.max_iters, cfg.tol, _tfft, _itfft, accelerate=False)
    elif alg == "tv_pd":
        if coils is not None:
            raise ValueError("tv_pd supports single-coil data only")
        x, info = _tv_pd(y, mask, cfg.lam, cfg.max_iters, cfg.tol)
    else:  # pragma: no cover - guarded by ReconConfig
        raise ValueError(alg)
    if cfg.apply_dc:
        if coils is not None:
            raise ValueError("data consistency is defined for single-coil data")
        x = data_consistency(x, y, mask)
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("reconstruction produced non-finite values")
    if not info.all_converged:
        log.debug("%s stopped at max_iters=%d before reaching tol", alg, cfg.max_iters)
    return (x, info) if return_info else x


def tv_reconstruct(cfg: ReconConfig, y, mask: CartesianMask, return_info: bool = False):
    return reconstruct(ReconConfig(**{**_kw(cfg), "algorithm": "tv_pd"}), y, mask,
                       return_info=return_info)


def ista_xf(cfg: ReconConfig, y, mask: CartesianMask, return_info: bool = False):
    return reconstruct(ReconConfig(**{**_kw(cfg), "algorithm": "ista_xf"}), y, mask,
                       return_info=return_info)


def _kw(cfg: ReconConfig) -> dict:
    return {"lam": cfg.lam, "alpha": cfg.alpha, "max_iters": cfg.max_iters,
            "tol": cfg.tol, "apply_dc": cfg.apply_dc}


def reconstruct_image(cfg: ReconConfig, y, mask: CartesianMask, **kw) -> ImageStack:
    """:func:`reconstruct` for a single sample, wrapped as an ImageStack."""
    return ImageStack(reconstruct(cfg, y, mask, **kw))
