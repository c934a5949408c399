import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import crandn, rel
from greedymask.core import CartesianMask, full_mask, mask_to_indicator
from greedymask.transform import (CoilSensitivities, ForwardModel, adjoint, box_sensitivities, coherence,
                                  dft_matrix, fft2_unitary, forward, haar_matrix, ifft2_unitary, psf,
                                  psf_sidelobe_ratio)


def direct_dft2(x):
    """Unitary 2D DFT by explicit summation."""
    h, w = x.shape
    fy = np.exp(-2j * np.pi * np.outer(np.arange(h), np.arange(h)) / h)
    fx = np.exp(-2j * np.pi * np.outer(np.arange(w), np.arange(w)) / w)
    return fy @ x @ fx.T / np.sqrt(h * w)


def test_delta_gives_constant_spectrum():
    x = np.zeros((4, 4))
    x[0, 0] = 1
    np.testing.assert_allclose(fft2_unitary(x), 0.25 * np.ones((1, 4, 4)), atol=1e-15)


def test_fft_matches_direct_sum(rng):
    x = crandn(rng, 6, 10)
    np.testing.assert_allclose(fft2_unitary(x)[0], direct_dft2(x), atol=1e-12)


@given(st.integers(1, 12), st.integers(1, 12), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_parseval_and_inverse(h, w, t, seed):
    x = crandn(np.random.default_rng(seed), t, h, w)
    k = fft2_unitary(x)
    assert abs(np.linalg.norm(k) - np.linalg.norm(x)) <= 1e-12 * np.linalg.norm(x)
    assert rel(ifft2_unitary(k), x) <= 1e-12


@given(st.integers(2, 9), st.integers(2, 9), st.integers(1, 3), st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_adjoint_identity(h, w, t, n_coils, seed):
    g = np.random.default_rng(seed)
    pairs = [(f, l) for f in range(t) for l in range(h)]
    k = int(g.integers(0, len(pairs) + 1))
    lines = tuple(pairs[i] for i in g.permutation(len(pairs))[:k])
    coils = CoilSensitivities(crandn(g, n_coils, h, w)) if n_coils else None
    model = ForwardModel(CartesianMask(h, w, t, lines), coils=coils)
    x = crandn(g, t, h, w)
    y = crandn(g, *forward(model, x).shape)
    lhs = np.vdot(forward(model, x), y)
    rhs = np.vdot(x, adjoint(model, y))
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1e-300) or abs(lhs - rhs) <= 1e-12


def test_adjoint_three_random_lines(rng):
    model = ForwardModel(CartesianMask(8, 8, 1, ((0, 1), (0, 4), (0, 6))))
    x, y = crandn(rng, 1, 8, 8), crandn(rng, 1, 8, 8)
    lhs, rhs = np.vdot(forward(model, x), y), np.vdot(x, adjoint(model, y))
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_full_and_empty_masks(rng):
    x = crandn(rng, 2, 5, 6)
    full = ForwardModel(full_mask(5, 6, 2))
    np.testing.assert_array_equal(forward(full, x), fft2_unitary(x))
    np.testing.assert_allclose(adjoint(full, forward(full, x)), x, atol=1e-13)
    empty = ForwardModel(CartesianMask(5, 6, 2))
    assert not forward(empty, x).any()
    assert not adjoint(empty, crandn(rng, 2, 5, 6)).any()


def test_unobserved_lines_zero_and_masking_idempotent(rng):
    mask = CartesianMask(6, 6, 1, ((0, 2), (0, 3)))
    ind = mask_to_indicator(mask)
    model = ForwardModel(mask, noise_sigma=0.3)
    y = forward(model, crandn(rng, 1, 6, 6), rng)
    assert not y[ind == 0].any()
    np.testing.assert_array_equal(y * ind * ind, y * ind)


def test_noise_variance(rng):
    model = ForwardModel(full_mask(10, 10), noise_sigma=0.05)
    x = np.zeros((1, 10, 10))
    draws = np.stack([forward(model, x, rng) for _ in range(1000)])  # 1e5 entries
    assert draws.size == 100_000
    for part in (draws.real, draws.imag):
        assert abs(part.var() / 0.05**2 - 1) < 0.05


def test_noise_requires_rng():
    with pytest.raises(ValueError):
        forward(ForwardModel(full_mask(4, 4), noise_sigma=0.1), np.zeros((1, 4, 4)))


def test_dimension_mismatch():
    model = ForwardModel(full_mask(4, 4))
    with pytest.raises(ValueError):
        forward(model, np.zeros((1, 4, 5)))
    with pytest.raises(ValueError):
        adjoint(model, np.zeros((2, 4, 4)))


def test_box_coils_recover_image(rng):
    """Three disjoint boxes on 12x12, full mask: sum_j conj(S_j) F^H y_j == x."""
    coils = box_sensitivities(12, 12, 3)
    s = coils.maps
    assert np.allclose((np.abs(s) ** 2).sum(axis=0), 1.0)
    assert np.all((s != 0).sum(axis=0) == 1)
    x = crandn(rng, 1, 12, 12)
    y = forward(ForwardModel(full_mask(12, 12), coils=coils), x)
    # direct computation, coil by coil
    manual = sum(np.conj(s[j]) * np.fft.ifft2(y[j, 0], norm="ortho") for j in range(3))
    np.testing.assert_allclose(manual, x[0], atol=1e-12)
    np.testing.assert_allclose(adjoint(ForwardModel(full_mask(12, 12), coils=coils), y), x, atol=1e-12)


def test_psf_full_is_delta():
    p = psf(full_mask(8, 8))
    assert abs(p[0, 0, 0]) == pytest.approx(1.0)
    p[0, 0, 0] = 0
    assert np.abs(p).max() < 1e-14
    assert psf_sidelobe_ratio(full_mask(8, 8)) < 1e-14


def test_psf_comb_folds_over():
    mask = CartesianMask(8, 8, 1, tuple((0, l) for l in range(0, 8, 2)))
    p = psf(mask)[0]
    # inverse DFT (1/N normalization) of the comb, by explicit summation
    ind = mask_to_indicator(mask)[0]
    n = np.arange(8)
    e = np.exp(2j * np.pi * np.outer(n, n) / 8)
    direct = e @ ind @ e.T / 64
    np.testing.assert_allclose(p, direct, atol=1e-14)
    peaks = np.argwhere(np.abs(p) > 1e-12)
    assert sorted(map(tuple, peaks)) == [(0, 0), (4, 0)]
    np.testing.assert_allclose(np.abs(p[[0, 4], 0]), 0.5)
    assert psf_sidelobe_ratio(mask) == pytest.approx(1.0)


def test_psf_empty_is_zero():
    assert not psf(CartesianMask(4, 4)).any()


def brute_coherence(a, w):
    p = a.shape[0]
    best = 0.0
    for i in range(p):
        for j in range(p):
            best = max(best, abs(sum(np.conj(a[k, i]) * w[k, j] for k in range(p))))
    return np.sqrt(p) * best


def test_coherence_examples():
    assert coherence(dft_matrix(4), np.eye(4)) == pytest.approx(1.0)
    assert coherence(np.eye(4), np.eye(4)) == pytest.approx(2.0)
    h = haar_matrix(8)
    np.testing.assert_allclose(h.T @ h, np.eye(8), atol=1e-14)
    mu = coherence(dft_matrix(8), h)
    # the coarsest Haar atom is constant, so it aligns with the DC row: mu = sqrt(8)
    assert 1.0 <= mu <= 2 * np.sqrt(2) + 1e-12
    assert mu == pytest.approx(brute_coherence(dft_matrix(8), h), abs=1e-12)


def test_coherence_rejects_non_unitary():
    with pytest.raises(ValueError):
        coherence(2 * np.eye(4), np.eye(4))


@given(st.integers(2, 16), st.integers(0, 2**32 - 1))
def test_coherence_bounds(p, seed):
    q, _ = np.linalg.qr(crandn(np.random.default_rng(seed), p, p))
    mu = coherence(dft_matrix(p), q)
    assert 1.0 - 1e-12 <= mu <= np.sqrt(p) + 1e-12
