"""Orthonormal DCT-II / DCT-III along the frame axis and the frequency operator.

Bins are numbered 1..F in prose (bin 1 is the DC term, bin F the highest
frequency) and stored 0-based, so bin ``i`` lives at index ``i - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .numerics import ShapeError


def dct_matrix(F: int) -> np.ndarray:
    """B[i, f] = sqrt(2/F) / sqrt(1 + [i == 0]) * cos(pi (2f + 1) i / (2F)), 0-based."""
    if F < 1:
        raise ValueError(f"frame count must be positive, got {F}")
    i = np.arange(F)[:, None]
    f = np.arange(F)[None, :]
    B = np.sqrt(2.0 / F) * np.cos(np.pi * (2 * f + 1) * i / (2 * F))
    B[0] /= np.sqrt(2.0)
    return B


@dataclass(frozen=True)
class SpectralBasis:
    F: int
    matrix: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def of(cls, F: int) -> "SpectralBasis":
        B = dct_matrix(F)
        B.setflags(write=False)
        return cls(F, B)

    @classmethod
    def identity(cls, F: int) -> "SpectralBasis":
        """Degenerate basis used to reduce spectral attention to plain attention."""
        eye = np.eye(F)
        eye.setflags(write=False)
        return cls(F, eye)


def _along(x, M, axis: int, F: int):
    """Apply matrix M (F x F) along ``axis`` of x: out[..k..] = sum_f M[k, f] x[..f..]."""
    shape = nx.value_of(x).shape
    axis = axis % len(shape)
    if shape[axis] != F:
        raise ShapeError(f"axis {axis} has length {shape[axis]}, basis expects F={F}")
    return nx.apply_along(x, M, axis)


def dct_forward(x, basis: SpectralBasis, axis: int = -1):
    """Coefficients c = B x for every vector along ``axis``."""
    return _along(x, basis.matrix, axis, basis.F)


def idct(c, basis: SpectralBasis, axis: int = -1):
    """Inverse transform x = B^T c along ``axis``."""
    return _along(c, basis.matrix.T, axis, basis.F)


@dataclass(frozen=True)
class FrequencyOperatorConfig:
    n_high: int
    phi: float = 0.5

    def validate(self, F: int) -> None:
        if not 0 <= self.n_high <= F:
            raise ValueError(f"N_c={self.n_high} outside [0, {F}]")
        if not 0.0 < self.phi < 1.0:
            raise ValueError(f"phi={self.phi} outside (0, 1)")

    def scales(self, F: int) -> np.ndarray:
        """Per-bin multipliers: phi for the low bins, 1 + phi for the top N_c."""
        self.validate(F)
        s = np.full(F, self.phi)
        s[F - self.n_high:] = 1.0 + self.phi
        return s


def frequency_operator(c, cfg: FrequencyOperatorConfig, axis: int = 0):
    """Rescale whole frequency bins along ``axis`` (leading axis by default)."""
    shape = nx.value_of(c).shape
    axis = axis % len(shape)
    F = shape[axis]
    s = cfg.scales(F).reshape((F,) + (1,) * (len(shape) - axis - 1))
    return nx.mul(c, s)


def spectral_energy(c):
    c = np.asarray(nx.value_of(c))
    return c * c


def residuals(F: int, n_random: int = 100, seed: int = 0) -> dict:
    """Orthonormality, round-trip and Parseval residuals for an F-point basis."""
    basis = SpectralBasis.of(F)
    B = basis.matrix
    x = nx.make_rng(seed).uniform(-1, 1, size=(n_random, F))
    c = dct_forward(x, basis)
    back = idct(c, basis)
    ex = (x * x).sum(axis=1)
    return {
        "F": F,
        "orthonormality": float(np.abs(B @ B.T - np.eye(F)).max()),
        "roundtrip": float(np.abs(back - x).max()),
        "parseval": float((np.abs(spectral_energy(c).sum(axis=1) - ex) / ex).max()),
    }
