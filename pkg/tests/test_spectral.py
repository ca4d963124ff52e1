import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from freqmix import spectral as sp
from freqmix.numerics import ShapeError, make_rng


def dct_by_summation(x):
    """Orthonormal DCT-II written out term by term (independent of dct_matrix)."""
    F = len(x)
    out = []
    for k in range(F):
        s = sum(x[f] * math.cos(math.pi * (2 * f + 1) * k / (2 * F)) for f in range(F))
        alpha = math.sqrt(1 / F) if k == 0 else math.sqrt(2 / F)
        out.append(alpha * s)
    return np.array(out)


def test_alternating_sequence_coefficients():
    c = sp.dct_forward(np.array([1.0, -1.0, 1.0, -1.0]), sp.SpectralBasis.of(4))
    np.testing.assert_allclose(c, [0.0, 0.76537, 0.0, 1.84776], atol=1e-5)
    np.testing.assert_allclose(c, dct_by_summation([1, -1, 1, -1]), atol=1e-12)


def test_constant_sequence_is_pure_dc():
    F = 8
    c = sp.dct_forward(np.full(F, 2.0), sp.SpectralBasis.of(F))
    np.testing.assert_allclose(c, [2 * math.sqrt(F)] + [0] * (F - 1), atol=1e-12)


@pytest.mark.parametrize("F", [1, 2, 5, 16])
def test_matrix_matches_summation(F):
    x = make_rng(F).normal(size=F)
    np.testing.assert_allclose(sp.dct_forward(x, sp.SpectralBasis.of(F)), dct_by_summation(x), atol=1e-12)


@pytest.mark.parametrize("F", [4, 8, 16, 64])
def test_residuals(F):
    r = sp.residuals(F)
    assert r["orthonormality"] < 1e-12
    assert r["roundtrip"] < 1e-10
    assert r["parseval"] < 1e-9


def test_transform_along_other_axes():
    basis = sp.SpectralBasis.of(6)
    x = make_rng(1).normal(size=(3, 6, 2))
    c = sp.dct_forward(x, basis, axis=1)
    for i in range(3):
        for j in range(2):
            np.testing.assert_allclose(c[i, :, j], dct_by_summation(x[i, :, j]), atol=1e-12)
    np.testing.assert_allclose(sp.idct(c, basis, axis=1), x, atol=1e-12)


def test_axis_length_mismatch():
    with pytest.raises(ShapeError):
        sp.dct_forward(np.ones(5), sp.SpectralBasis.of(4))


def test_basis_is_read_only():
    with pytest.raises(ValueError):
        sp.SpectralBasis.of(4).matrix[0, 0] = 1.0


def test_frequency_operator_scales_bins():
    cfg = sp.FrequencyOperatorConfig(n_high=12, phi=0.5)
    c = np.ones((64, 3, 3))
    out = sp.frequency_operator(c, cfg)
    assert np.all(out[:52] == 0.5)
    assert np.all(out[52:] == 1.5)


def test_frequency_operator_edge_counts():
    c = np.arange(1.0, 5.0)
    np.testing.assert_array_equal(sp.frequency_operator(c, sp.FrequencyOperatorConfig(0, 0.5)), 0.5 * c)
    np.testing.assert_array_equal(sp.frequency_operator(c, sp.FrequencyOperatorConfig(4, 0.5)), 1.5 * c)
    with pytest.raises(ValueError):
        sp.frequency_operator(c, sp.FrequencyOperatorConfig(5, 0.5))
    with pytest.raises(ValueError):
        sp.FrequencyOperatorConfig(1, 1.0).validate(4)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (8, 2, 2), elements=st.floats(-10, 10)), st.floats(-5, 5))
def test_frequency_operator_is_linear(m, alpha):
    cfg = sp.FrequencyOperatorConfig(3, 0.5)
    lhs = sp.frequency_operator(alpha * m, cfg)
    rhs = alpha * sp.frequency_operator(m, cfg)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12, rtol=0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 32), st.integers(0, 2**31))
def test_parseval_for_random_signals(F, seed):
    x = make_rng(seed).normal(size=F)
    c = sp.dct_forward(x, sp.SpectralBasis.of(F))
    assert abs(sp.spectral_energy(c).sum() - (x * x).sum()) <= 1e-9 * max(1.0, (x * x).sum())
