"""Orthonormal Haar wavelet transform, full depth (Mallat pyramid).

Decomposition continues while the current approximation block has even
size > 1 along every transformed axis, so any grid size is accepted.
"""

from __future__ import annotations

import numpy as np

_S = np.sqrt(0.5)


def _levels(sizes) -> int:
    n = 0
    sizes = list(sizes)
    while all(s > 1 and s % 2 == 0 for s in sizes):
        sizes = [s // 2 for s in sizes]
        n += 1
    return n


def haar2(x: np.ndarray) -> np.ndarray:
    """2D Haar analysis over the last two axes."""
    out = np.array(x, dtype=np.result_type(x, float), copy=True)
    h, w = out.shape[-2:]
    for _ in range(_levels((h, w))):
        blk = out[..., :h, :w]
        a = blk[..., 0::2, 0::2]
        b = blk[..., 0::2, 1::2]
        c = blk[..., 1::2, 0::2]
        d = blk[..., 1::2, 1::2]
        ll = 0.5 * (a + b + c + d)
        lh = 0.5 * (a - b + c - d)
        hl = 0.5 * (a + b - c - d)
        hh = 0.5 * (a - b - c + d)
        h2, w2 = h // 2, w // 2
        out[..., :h2, :w2] = ll
        out[..., :h2, w2:w] = lh
        out[..., h2:h, :w2] = hl
        out[..., h2:h, w2:w] = hh
        h, w = h2, w2
    return out


def ihaar2(coef: np.ndarray) -> np.ndarray:
    out = np.array(coef, dtype=np.result_type(coef, float), copy=True)
    H, W = out.shape[-2:]
    for level in reversed(range(_levels((H, W)))):
        h, w = H >> level, W >> level
        h2, w2 = h // 2, w // 2
        ll = out[..., :h2, :w2].copy()
        lh = out[..., :h2, w2:w].copy()
        hl = out[..., h2:h, :w2].copy()
        hh = out[..., h2:h, w2:w].copy()
        out[..., 0:h:2, 0:w:2] = 0.5 * (ll + lh + hl + hh)
        out[..., 0:h:2, 1:w:2] = 0.5 * (ll - lh + hl - hh)
        out[..., 1:h:2, 0:w:2] = 0.5 * (ll + lh - hl - hh)
        out[..., 1:h:2, 1:w:2] = 0.5 * (ll - lh - hl + hh)
    return out


def haar1(x: np.ndarray) -> np.ndarray:
    """1D Haar analysis over the last axis."""
    out = np.array(x, dtype=np.result_type(x, float), copy=True)
    n = out.shape[-1]
    for _ in range(_levels((n,))):
        blk = out[..., :n]
        a, d = (blk[..., 0::2] + blk[..., 1::2]) * _S, (blk[..., 0::2] - blk[..., 1::2]) * _S
        out[..., : n // 2] = a
        out[..., n // 2: n] = d
        n //= 2
    return out


def haar_matrix(n: int) -> np.ndarray:
    """1D synthesis matrix whose columns are the orthonormal Haar atoms."""
    analysis = haar1(np.eye(n)).T  # column i = analysis of e_i
    return analysis.conj().T
