"""Discrete Fourier machinery on the periodic box [0, L)^3.

Fields are represented by their full complex Fourier coefficient array
``c[k1, k2, k3]`` in FFT index order, normalized so that

    f(x) = sum_k c(k) * exp(i k . x)

Real-valued fields correspond to Hermitian-symmetric coefficients,
``c(-k) = conj(c(k))``.  All derivative, Laplacian and inverse-Laplacian
operators are diagonal multipliers on this array; nonlinear products are
formed pointwise in physical space and truncated with the 2/3 rule so that
quadratic terms are exact convolutions on the retained modes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as _fft

__all__ = [
    "SpectralGrid",
    "SpectralField",
    "forward_transform",
    "inverse_transform",
    "derivative",
    "laplacian",
    "horizontal_laplacian",
    "inverse_neg_laplacian",
    "dealias",
    "sobolev_inner",
    "sobolev_norm_sq",
    "mixed_norm",
]

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SpectralGrid:
    """Immutable discretization context: resolution, wavenumbers, dealias mask.

    The wavenumber table along each axis is the integer lattice
    {-n/2+1, ..., n/2} scaled by 2*pi/box_length, in FFT index order.
    The Nyquist mode (index n/2) sits outside the 2/3 dealias ball, so it
    never carries dynamic content; odd derivatives of fields with Nyquist
    energy are therefore never taken in practice.
    """

    n1: int
    n2: int
    n3: int
    box_length: float = _TWO_PI

    def __post_init__(self):
        for n in (self.n1, self.n2, self.n3):
            if n <= 0 or n % 2 != 0:
                raise ValueError(f"grid resolution must be positive and even, got {n}")
        if self.box_length <= 0:
            raise ValueError("box_length must be positive")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3)

    @property
    def size(self) -> int:
        return self.n1 * self.n2 * self.n3

    @property
    def volume(self) -> float:
        return self.box_length ** 3

    def _axis_wavenumbers(self, n: int) -> np.ndarray:
        k = np.fft.fftfreq(n, d=1.0 / n)
        k[n // 2] = n // 2  # use +n/2 for the (inert) Nyquist mode
        return k * (_TWO_PI / self.box_length)

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-axis 1D wavenumber tables in FFT index order."""
        return (
            self._axis_wavenumbers(self.n1),
            self._axis_wavenumbers(self.n2),
            self._axis_wavenumbers(self.n3),
        )

    @cached_property
    def k(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable 3D wavenumber arrays (K1, K2, K3)."""
        k1, k2, k3 = self.wavenumbers
        return (
            k1.reshape(-1, 1, 1),
            k2.reshape(1, -1, 1),
            k3.reshape(1, 1, -1),
        )

    @cached_property
    def ksq(self) -> np.ndarray:
        K1, K2, K3 = self.k
        return K1 * K1 + K2 * K2 + K3 * K3

    @cached_property
    def khsq(self) -> np.ndarray:
        K1, K2, _ = self.k
        return (K1 * K1 + K2 * K2) + np.zeros(self.shape)

    @cached_property
    def inv_ksq(self) -> np.ndarray:
        """Multiplier of (-Laplacian)^{-1}: 1/|k|^2 with the k=0 mode zeroed."""
        out = np.zeros(self.shape)
        nz = self.ksq != 0.0
        out[nz] = 1.0 / self.ksq[nz]
        return out

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """True iff |k_j| <= n_j/3 on every axis (2/3 rule)."""

        def axis_mask(n):
            idx = np.fft.fftfreq(n, d=1.0 / n)
            idx[n // 2] = n // 2
            return np.abs(idx) <= n // 3

        m1 = axis_mask(self.n1).reshape(-1, 1, 1)
        m2 = axis_mask(self.n2).reshape(1, -1, 1)
        m3 = axis_mask(self.n3).reshape(1, 1, -1)
        return m1 & m2 & m3

    @cached_property
    def _neg_index(self) -> tuple[np.ndarray, ...]:
        """Fancy index mapping mode k to mode -k (per-axis (-i) mod n)."""
        return np.ix_(
            (-np.arange(self.n1)) % self.n1,
            (-np.arange(self.n2)) % self.n2,
            (-np.arange(self.n3)) % self.n3,
        )

    def sobolev_multiplier(self, s: int) -> np.ndarray:
        """m_s(k) = sum over multi-indices |alpha| <= s of prod_j k_j^(2 alpha_j)."""
        if s not in (0, 1, 2, 3):
            raise ValueError(f"Sobolev order must be one of 0..3, got {s}")
        key = f"_sob_mult_{s}"
        cached = self.__dict__.get(key)
        if cached is not None:
            return cached
        K1, K2, K3 = self.k
        m = np.zeros(self.shape)
        for a1, a2, a3 in itertools.product(range(s + 1), repeat=3):
            if a1 + a2 + a3 <= s:
                m = m + K1 ** (2 * a1) * K2 ** (2 * a2) * K3 ** (2 * a3)
        self.__dict__[key] = m
        return m

    # -- transforms ---------------------------------------------------------

    def to_spectral(self, samples: np.ndarray) -> np.ndarray:
        """Normalized DFT of real physical samples -> full complex array."""
        if samples.shape != self.shape:
            raise ValueError(
                f"sample array shape {samples.shape} does not match grid {self.shape}"
            )
        half = _fft.rfftn(np.ascontiguousarray(samples, dtype=np.float64))
        half /= self.size
        return self._expand_half(half)

    def to_physical(self, coeffs: np.ndarray) -> np.ndarray:
        """Inverse transform to real physical samples (real part by Hermitian symmetry)."""
        h = self.n3 // 2 + 1
        half = coeffs[:, :, :h] * self.size
        return _fft.irfftn(half, s=self.shape)

    def _expand_half(self, half: np.ndarray) -> np.ndarray:
        """Rebuild the full coefficient array from the rfftn half-spectrum."""
        n1, n2, n3 = self.shape
        h = n3 // 2 + 1
        full = np.empty(self.shape, dtype=np.complex128)
        full[:, :, :h] = half
        i1 = (-np.arange(n1)) % n1
        i2 = (-np.arange(n2)) % n2
        i3 = np.arange(n3 - h, 0, -1)  # maps k3 = h..n3-1 to n3-k3 = h-2..1
        full[:, :, h:] = np.conj(half[np.ix_(i1, i2, i3)])
        return full

    def hermitize(self, coeffs: np.ndarray) -> np.ndarray:
        """Project onto Hermitian-symmetric (real-field) coefficients."""
        return 0.5 * (coeffs + np.conj(coeffs[self._neg_index]))

    # -- half-spectrum (rfft) internals --------------------------------------
    #
    # The time stepper works on the non-redundant rfft half-spectrum
    # c[k1, k2, k3] with 0 <= k3 <= n3/2; the k3 > n3/2 modes of the full
    # array are determined by Hermitian symmetry.  Every multiplier below is
    # the [:, :, :h] slice of its full counterpart, so half-spectrum
    # arithmetic agrees with the full-array operators to round-off.

    @property
    def hshape(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3 // 2 + 1)

    @cached_property
    def k_half(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        k1, k2, k3 = self.wavenumbers
        h = self.n3 // 2 + 1
        return (
            k1.reshape(-1, 1, 1),
            k2.reshape(1, -1, 1),
            k3[:h].reshape(1, 1, -1),
        )

    @cached_property
    def ksq_half(self) -> np.ndarray:
        return self.ksq[:, :, : self.n3 // 2 + 1]

    @cached_property
    def khsq_half(self) -> np.ndarray:
        return self.khsq[:, :, : self.n3 // 2 + 1]

    @cached_property
    def inv_ksq_half(self) -> np.ndarray:
        return self.inv_ksq[:, :, : self.n3 // 2 + 1]

    @cached_property
    def dealias_mask_half(self) -> np.ndarray:
        return self.dealias_mask[:, :, : self.n3 // 2 + 1]

    @cached_property
    def _neg_index_2d(self) -> tuple[np.ndarray, ...]:
        """Mode -> mirror mode within a self-conjugate k3 plane."""
        return np.ix_(
            (-np.arange(self.n1)) % self.n1,
            (-np.arange(self.n2)) % self.n2,
        )

    def half_from_full(self, coeffs: np.ndarray) -> np.ndarray:
        return coeffs[:, :, : self.n3 // 2 + 1].copy()

    def full_from_half(self, half: np.ndarray) -> np.ndarray:
        return self._expand_half(half)

    def to_spectral_half(self, samples: np.ndarray) -> np.ndarray:
        return _fft.rfftn(samples, norm="forward")

    def to_physical_half(self, half: np.ndarray) -> np.ndarray:
        return _fft.irfftn(half, s=self.shape, norm="forward")

    def hermitize_half(self, half: np.ndarray) -> np.ndarray:
        """Re-impose the in-plane symmetry of the self-conjugate k3 planes."""
        neg = self._neg_index_2d
        for plane in (0, self.n3 // 2):
            p = half[:, :, plane]
            half[:, :, plane] = 0.5 * (p + np.conj(p[neg]))
        return half


@dataclass
class SpectralField:
    """Fourier coefficients of one real scalar field on a SpectralGrid."""

    grid: SpectralGrid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.coeffs.shape != self.grid.shape:
            raise ValueError(
                f"coefficient shape {self.coeffs.shape} does not match grid {self.grid.shape}"
            )
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)

    @classmethod
    def zeros(cls, grid: SpectralGrid) -> "SpectralField":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy())

    def is_hermitian(self, tol: float = 1e-13) -> bool:
        c = self.coeffs
        scale = float(np.max(np.abs(c))) or 1.0
        return float(np.max(np.abs(c - np.conj(c[self.grid._neg_index])))) <= tol * scale

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__


def _check_same_grid(a: SpectralField, b: SpectralField) -> None:
    if a.grid is not b.grid and a.grid != b.grid:
        raise ValueError("fields live on different grids")


def forward_transform(grid: SpectralGrid, samples: np.ndarray) -> SpectralField:
    """Transform real physical samples into a SpectralField."""
    return SpectralField(grid, grid.to_spectral(samples))


def inverse_transform(f: SpectralField) -> np.ndarray:
    """Real physical samples of the field."""
    return f.grid.to_physical(f.coeffs)


def derivative(f: SpectralField, axis: int) -> SpectralField:
    """Spectral derivative along axis 1, 2 or 3 (multiplier i*k_axis)."""
    if axis not in (1, 2, 3):
        raise ValueError(f"axis must be 1, 2 or 3, got {axis}")
    K = f.grid.k[axis - 1]
    return SpectralField(f.grid, 1j * K * f.coeffs)


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, -f.grid.ksq * f.coeffs)


def horizontal_laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, -f.grid.khsq * f.coeffs)


def inverse_neg_laplacian(f: SpectralField) -> SpectralField:
    """(-Laplacian)^{-1} with the k=0 mode of the output set to zero."""
    return SpectralField(f.grid, f.grid.inv_ksq * f.coeffs)


def dealias(f: SpectralField) -> SpectralField:
    """Zero all coefficients outside the 2/3-rule ball (idempotent projection)."""
    return SpectralField(f.grid, np.where(f.grid.dealias_mask, f.coeffs, 0.0))


def sobolev_inner(a: SpectralField, b: SpectralField, s: int) -> float:
    """Standard H^s inner product, sum over |alpha| <= s of (d^alpha a | d^alpha b)_L2."""
    _check_same_grid(a, b)
    m = a.grid.sobolev_multiplier(s)
    return a.grid.volume * float(np.sum(m * np.real(a.coeffs * np.conj(b.coeffs))))


def sobolev_norm_sq(a: SpectralField, s: int) -> float:
    return sobolev_inner(a, a, s)


_SUPPORTED_EXPONENTS = (2, 4, np.inf)


def mixed_norm(f: SpectralField, q_h: float, r_v: float) -> float:
    """L^{q_h} over (x1, x2) of the L^{r_v} over x3 of the physical samples.

    Quadrature is the uniform-grid Riemann sum (exact for band-limited
    integrands of matching degree); L^inf is the grid max.
    """
    if q_h not in _SUPPORTED_EXPONENTS or r_v not in _SUPPORTED_EXPONENTS:
        raise ValueError(f"unsupported exponent pair ({q_h}, {r_v})")
    phys = np.abs(inverse_transform(f))
    g = f.grid
    dz = g.box_length / g.n3
    if r_v == np.inf:
        inner = phys.max(axis=2)
    else:
        inner = (np.sum(phys ** r_v, axis=2) * dz) ** (1.0 / r_v)
    if q_h == np.inf:
        return float(inner.max())
    da = (g.box_length / g.n1) * (g.box_length / g.n2)
    return float((np.sum(inner ** q_h) * da) ** (1.0 / q_h))
