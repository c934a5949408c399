"""Unitary Fourier operators, the masked (multicoil) forward model and
aliasing diagnostics (PSF, coherence)."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import CartesianMask, as_array, mask_to_indicator
from .wavelet import haar_matrix  # noqa: F401


def fft2c(x: np.ndarray) -> np.ndarray:
    """Unitary 2D DFT over the last two axes (DC at index 0)."""
    return np.fft.fft2(x, norm="ortho")


def ifft2c(k: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(k, norm="ortho")


def fft2_unitary(img) -> np.ndarray:
    """Frame-wise unitary 2D FFT of an image stack."""
    return fft2c(as_array(img))


def ifft2_unitary(kspace) -> np.ndarray:
    return ifft2c(np.asarray(kspace))


def centered(kspace: np.ndarray) -> np.ndarray:
    """fftshift-ed view of k-space over the last two axes, DC in the middle."""
    return np.fft.fftshift(kspace, axes=(-2, -1))


@dataclass(frozen=True)
class CoilSensitivities:
    """Stack of ``C`` complex sensitivity maps of shape ``(H, W)``."""

    maps: np.ndarray

    def __post_init__(self):
        maps = np.array(self.maps, dtype=np.complex128)
        if maps.ndim == 2:
            maps = maps[None]
        if maps.ndim != 3 or maps.shape[0] < 1:
            raise ValueError("coil maps must have shape (C, H, W) with C >= 1")
        maps.setflags(write=False)
        object.__setattr__(self, "maps", maps)

    @property
    def n_coils(self) -> int:
        return self.maps.shape[0]

    def expand(self, x: np.ndarray) -> np.ndarray:
        """``(..., T, H, W)`` image -> ``(..., C, T, H, W)`` coil images."""
        return self.maps[:, None] * x[..., None, :, :, :]

    def combine(self, coil_images: np.ndarray) -> np.ndarray:
        return np.sum(np.conj(self.maps[:, None]) * coil_images, axis=-4)


def box_sensitivities(h: int, w: int, n_coils: int = 3) -> CoilSensitivities:
    """Disjoint vertical bands covering the grid, so that sum |S_j|^2 = 1."""
    maps = np.zeros((n_coils, h, w))
    edges = np.linspace(0, w, n_coils + 1).round().astype(int)
    for j in range(n_coils):
        maps[j, :, edges[j]:edges[j + 1]] = 1.0
    return CoilSensitivities(maps)


@dataclass(frozen=True)
class ForwardModel:
    """y = P_mask F S_j x + noise, with circular complex Gaussian noise whose
    real and imaginary parts each have standard deviation ``noise_sigma``."""

    mask: CartesianMask
    noise_sigma: float = 0.0
    coils: CoilSensitivities | None = None

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.coils is not None and self.coils.maps.shape[1:] != (self.mask.h, self.mask.w):
            raise ValueError("coil maps do not match mask grid")

    @cached_property
    def indicator(self) -> np.ndarray:
        ind = mask_to_indicator(self.mask)
        ind.setflags(write=False)
        return ind

    def _check_image(self, x: np.ndarray) -> None:
        m = self.mask
        if x.shape[-3:] != (m.t, m.h, m.w):
            raise ValueError(f"image shape {x.shape[-3:]} does not match mask (T,H,W)={(m.t, m.h, m.w)}")

    def _check_obs(self, y: np.ndarray) -> None:
        m = self.mask
        if y.shape[-3:] != (m.t, m.h, m.w):
            raise ValueError(f"observation shape {y.shape} does not match mask")
        if self.coils is not None and (y.ndim < 4 or y.shape[-4] != self.coils.n_coils):
            raise ValueError("multicoil observation must have a coil axis at -4")


def forward(model: ForwardModel, x, rng: np.random.Generator | None = None) -> np.ndarray:
    """Masked k-space observation; unobserved entries are exactly zero.

    Output shape is ``(..., T, H, W)`` for single coil and
    ``(..., C, T, H, W)`` with coil maps.
    """
    x = as_array(x)
    model._check_image(x)
    if model.coils is not None:
        x = model.coils.expand(x)
    ind = model.indicator
    y = fft2c(x) * ind
    if model.noise_sigma > 0:
        if rng is None:
            raise ValueError("an rng is required when noise_sigma > 0")
        noise = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
        y = y + model.noise_sigma * noise * ind
    return y


def adjoint(model: ForwardModel, y) -> np.ndarray:
    """Adjoint of the noiseless forward operator."""
    y = np.asarray(y)
    model._check_obs(y)
    img = ifft2c(y * model.indicator)
    if model.coils is not None:
        img = model.coils.combine(img)
    return img


def psf(mask: CartesianMask) -> np.ndarray:
    """Inverse unitary FFT of the mask indicator, ``(T, H, W)`` complex.

    Scaled so the fully sampled mask gives a unit delta at the origin.
    """
    ind = mask_to_indicator(mask)
    return np.fft.ifft2(ind)


def psf_sidelobe_ratio(mask: CartesianMask) -> float:
    """Largest off-origin PSF magnitude relative to the peak (max over frames)."""
    p = np.abs(psf(mask))
    worst = 0.0
    for frame in p:
        peak = frame[0, 0]
        if peak == 0:
            return np.inf
        side = frame.copy()
        side[0, 0] = 0.0
        worst = max(worst, float(side.max() / peak))
    return worst


def _check_unitary(m: np.ndarray, name: str) -> np.ndarray:
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be a square matrix")
    if not np.allclose(m.conj().T @ m, np.eye(m.shape[0]), atol=1e-8, rtol=0):
        raise ValueError(f"{name} columns are not orthonormal")
    return m


def coherence(obs_basis: np.ndarray, rep_basis: np.ndarray) -> float:
    """sqrt(P) * max_ij |<a_i, w_j>| between two orthonormal bases (columns)."""
    a = _check_unitary(obs_basis, "obs_basis")
    w = _check_unitary(rep_basis, "rep_basis")
    if a.shape != w.shape:
        raise ValueError("bases must have the same size")
    p = a.shape[0]
    if p > 4096:
        raise ValueError("coherence is limited to P <= 4096")
    return float(np.sqrt(p) * np.abs(a.conj().T @ w).max())


def dft_matrix(n: int) -> np.ndarray:
    return np.fft.fft(np.eye(n), norm="ortho")

