"""Discretised domain T^2 x (-1, 1), field containers and the structural maps.

Spectral arrays use the real-FFT layout ``(..., C, nx, ny // 2 + 1, nz)``: the
y axis carries the Hermitian half, x and z are full axes.  Coefficients are
normalised so that ``f(x, y, z) = sum_k c_k exp(i k . (x, y, z))`` with
``kx, ky in 2*pi*Z`` and ``kz in pi*Z``.  Physical arrays are
``(..., C, nx, ny, nz)`` sampled at ``x = i/nx``, ``y = j/ny`` and
``z = 2 l / nz`` (taken mod 2 into ``[-1, 1)``).

Array-level helpers (leading underscore) accept arbitrary leading batch
dimensions and are what the integrator uses; the public functions wrap them
for :class:`SpectralField` values.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.fft as sfft

from .errors import ConstraintViolation, GridMismatch

# rfft runs along the last listed axis, i.e. y
FFT_AXES = (-3, -1, -2)
CONSTRAINT_TOL = 1e-12


@dataclass(frozen=True)
class Grid:
    """Uniform collocation grid with unit horizontal period and vertical period 2."""

    nx: int
    ny: int
    nz: int

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            n = getattr(self, name)
            if int(n) != n or n < 4 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 4, got {n!r}")

    lx = 1.0
    ly = 1.0
    lz = 2.0

    @property
    def shape(self):
        return (self.nx, self.ny, self.nz)

    @property
    def spectral_shape(self):
        return (self.nx, self.ny // 2 + 1, self.nz)

    @property
    def volume(self):
        return self.lx * self.ly * self.lz

    @property
    def npoints(self):
        return self.nx * self.ny * self.nz

    @property
    def dx(self):
        return min(self.lx / self.nx, self.ly / self.ny, self.lz / self.nz)

    @cached_property
    def kx(self):
        return (2 * np.pi * sfft.fftfreq(self.nx, 1.0 / self.nx)).reshape(-1, 1, 1)

    @cached_property
    def ky(self):
        return (2 * np.pi * np.arange(self.ny // 2 + 1, dtype=float)).reshape(1, -1, 1)

    @cached_property
    def kz(self):
        return (np.pi * sfft.fftfreq(self.nz, 1.0 / self.nz)).reshape(1, 1, -1)

    # first-derivative wavenumbers: Nyquist entries zeroed so derivatives stay real
    @cached_property
    def kx_d(self):
        k = self.kx.copy()
        k[self.nx // 2] = 0.0
        return k

    @cached_property
    def ky_d(self):
        k = self.ky.copy()
        k[0, self.ny // 2] = 0.0
        return k

    @cached_property
    def kz_d(self):
        k = self.kz.copy()
        k[0, 0, self.nz // 2] = 0.0
        return k

    @cached_property
    def k2(self):
        return self.kx**2 + self.ky**2 + self.kz**2

    @cached_property
    def kh2(self):
        return self.kx**2 + self.ky**2

    @cached_property
    def hermitian_weight(self):
        w = np.full((1, self.ny // 2 + 1, 1), 2.0)
        w[0, 0, 0] = 1.0
        w[0, -1, 0] = 1.0
        return w

    @cached_property
    def lambda1(self):
        """Smallest nonzero eigenvalue of -Laplacian among represented modes."""
        k2 = self.k2
        return float(k2[k2 > 0].min())

    def coords(self):
        """Broadcastable collocation coordinates ``(x, y, z)`` with z in [-1, 1)."""
        x = (np.arange(self.nx) / self.nx).reshape(-1, 1, 1)
        y = (np.arange(self.ny) / self.ny).reshape(1, -1, 1)
        z = 2.0 * np.arange(self.nz) / self.nz
        z = np.where(z >= 1.0, z - 2.0, z).reshape(1, 1, -1)
        return x, y, z

    def refined(self, factor):
        return Grid(self.nx * factor, self.ny * factor, self.nz * factor)

    # transforms ---------------------------------------------------------

    def to_spectral(self, values):
        return sfft.rfftn(values, axes=FFT_AXES, norm="forward")

    def to_physical(self, coeffs, oversample=1):
        if oversample != 1:
            coeffs = pad_spectrum(self, coeffs, oversample)
            g = self.refined(oversample)
        else:
            g = self
        return sfft.irfftn(coeffs, s=(g.nx, g.nz, g.ny), axes=FFT_AXES, norm="forward")

    # quadratic forms ----------------------------------------------------

    def inner(self, a, b):
        """L2 inner product of two spectral arrays, reduced over the last 4 axes."""
        prod = (a.conj() * b).real * self.hermitian_weight
        lead = prod.shape[:-4]
        return self.volume * prod.reshape(lead + (-1,)).sum(axis=-1)

    def norm_sq(self, a):
        sq = (a.real**2 + a.imag**2) * self.hermitian_weight
        lead = sq.shape[:-4]
        return self.volume * sq.reshape(lead + (-1,)).sum(axis=-1)


@lru_cache(maxsize=64)
def _dealias_mask(grid, fraction):
    def keep(n, k, period):
        idx = np.abs(np.rint(k * period / (2 * np.pi)))
        return 2.0 * idx < fraction * n - 1e-9

    mx = keep(grid.nx, grid.kx, grid.lx)
    my = keep(grid.ny, grid.ky, grid.ly)
    mz = keep(grid.nz, grid.kz, grid.lz)
    mask = mx & my & mz
    mask.flags.writeable = False
    return mask


def dealias_mask(grid, fraction=2.0 / 3.0):
    """Boolean spectral mask keeping modes with ``|n| < fraction * N / 2`` on every axis."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("dealias fraction must lie in (0, 1]")
    return _dealias_mask(grid, float(fraction))


def _nyquist_weight(n):
    w = np.ones(n)
    w[n // 2] = 0.5
    return w


def pad_spectrum(grid, coeffs, factor):
    """Zero-pad a spectral array onto ``grid.refined(factor)`` (same function values).

    Nyquist coefficients are split evenly between the two signed
    wavenumbers they represent on the finer grid.
    """
    if factor == 1:
        return coeffs
    g = grid.refined(factor)
    hx, hy, hz = grid.nx // 2, grid.ny // 2, grid.nz // 2
    w = (
        _nyquist_weight(grid.nx)[:, None, None]
        * _nyquist_weight(2 * hy)[None, : hy + 1, None]
        * _nyquist_weight(grid.nz)[None, None, :]
    )
    a = coeffs * w
    out = np.zeros(coeffs.shape[:-3] + g.spectral_shape, dtype=complex)
    bx, bz = g.nx, g.nz
    xs = ((slice(0, hx + 1), slice(0, hx + 1)), (slice(hx + 1, None), slice(bx - hx + 1, None)))
    zs = ((slice(0, hz + 1), slice(0, hz + 1)), (slice(hz + 1, None), slice(bz - hz + 1, None)))
    for sx, dx in xs:
        for sz, dz in zs:
            out[..., dx, : hy + 1, dz] = a[..., sx, :, sz]
    out[..., bx - hx, :, :] = out[..., hx, :, :]
    out[..., :, :, bz - hz] = out[..., :, :, hz]
    return out


def check_grid(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatch(f"grid {f.grid} does not match {g}")
    return g


def _half_to_full(grid, half):
    """Exact Hermitian completion of the y axis (no arithmetic besides conjugation)."""
    nx, ny, nz = grid.shape
    nyh = ny // 2 + 1
    full = np.empty(half.shape[:-2] + (ny, nz), dtype=complex)
    full[..., :nyh, :] = half
    ix = (-np.arange(nx)) % nx
    iz = (-np.arange(nz)) % nz
    jy = ny - np.arange(nyh, ny)
    mirrored = np.take(np.take(np.take(half, ix, axis=-3), jy, axis=-2), iz, axis=-1)
    full[..., nyh:, :] = mirrored.conj()
    return full


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Real-valued field stored as half-spectrum coefficients ``(C, nx, ny//2+1, nz)``."""

    grid: Grid
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.ndim != 4 or data.shape[1:] != self.grid.spectral_shape:
            raise ValueError(
                f"expected shape (C,) + {self.grid.spectral_shape}, got {data.shape}"
            )
        data = data.copy()
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def ncomp(self):
        return self.data.shape[0]

    @property
    def coeffs(self):
        """Full complex coefficient array ``(C, nx, ny, nz)``."""
        return _half_to_full(self.grid, self.data)

    @classmethod
    def from_coeffs(cls, grid, coeffs):
        coeffs = np.asarray(coeffs, dtype=complex)
        return cls(grid, coeffs[..., : grid.ny // 2 + 1, :].copy())

    @classmethod
    def from_physical(cls, grid, values):
        values = np.asarray(values, dtype=float)
        if values.ndim == 3:
            values = values[None]
        return cls(grid, grid.to_spectral(values))

    @classmethod
    def zeros(cls, grid, ncomp=2):
        return cls(grid, np.zeros((ncomp,) + grid.spectral_shape, dtype=complex))

    def to_physical(self, oversample=1):
        vals = self.grid.to_physical(self.data, oversample)
        g = self.grid if oversample == 1 else self.grid.refined(oversample)
        return PhysicalField(g, vals)

    def inner(self, other):
        check_grid(self, other)
        return float(self.grid.inner(self.data, other.data))

    def norm(self):
        return float(np.sqrt(self.grid.norm_sq(self.data)))

    def mean(self):
        """Spatial mean of each component."""
        return self.data[:, 0, 0, 0].real.copy()

    def __add__(self, other):
        check_grid(self, other)
        return SpectralField(self.grid, self.data + other.data)

    def __sub__(self, other):
        check_grid(self, other)
        return SpectralField(self.grid, self.data - other.data)

    def __mul__(self, scalar):
        return SpectralField(self.grid, self.data * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.grid, -self.data)

    def __repr__(self):
        return f"SpectralField(grid={self.grid}, ncomp={self.ncomp}, norm={self.norm():.6g})"


@dataclass(frozen=True, eq=False)
class PhysicalField:
    """Grid samples ``(C, nx, ny, nz)``; ``half_domain`` marks samples on z in [0, 1]."""

    grid: Grid
    values: np.ndarray
    half_domain: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 3:
            v = v[None]
        nz = self.grid.nz // 2 + 1 if self.half_domain else self.grid.nz
        if v.shape[1:] != (self.grid.nx, self.grid.ny, nz):
            raise ValueError(f"bad physical shape {v.shape} for grid {self.grid}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def cell_volume(self):
        return self.grid.volume / self.grid.npoints

    def integrate(self, values=None):
        v = self.values if values is None else values
        return float(v.sum() * self.cell_volume)

    def to_spectral(self):
        if self.half_domain:
            raise ValueError("half-domain samples must go through even_extend")
        return SpectralField.from_physical(self.grid, self.values)


# structural maps ---------------------------------------------------------


def _mean_divergence(grid, a):
    """Spectral coefficients of div_h of the z-integral; shape (..., nx, nyh)."""
    s = a[..., 0]
    kx = grid.kx_d[:, :, 0]
    ky = grid.ky_d[:, :, 0]
    return 2j * (kx * s[..., 0, :, :] + ky * s[..., 1, :, :])


def _constraint_residual(grid, a):
    d = _mean_divergence(grid, a)
    w = grid.hermitian_weight[:, :, 0]
    num = (np.abs(d) ** 2 * w).reshape(d.shape[:-2] + (-1,)).sum(-1) * grid.lx * grid.ly
    den = grid.norm_sq(a)
    num = np.sqrt(num)
    den = np.sqrt(den)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), num)


def constraint_residual(v):
    """``||div_h M v||_{L2(T^2)} / ||v||_{L2}`` (0 for the zero field)."""
    return float(_constraint_residual(v.grid, v.data))


def check_in_H(v, tol=CONSTRAINT_TOL):
    r = constraint_residual(v)
    if not r <= tol:
        raise ConstraintViolation(f"div_h M v residual {r:.3e} exceeds {tol:.1e}")
    return r


def _vertical_mean(grid, a):
    out = np.zeros_like(a)
    out[..., 0] = 2.0 * a[..., 0]
    return out


def vertical_mean(v):
    """Integral of ``v`` over z in (-1, 1), returned as a z-independent field."""
    return SpectralField(v.grid, _vertical_mean(v.grid, v.data))


def _compute_w(grid, a):
    div = 1j * (grid.kx_d * a[..., 0, :, :, :] + grid.ky_d * a[..., 1, :, :, :])
    kz = grid.kz_d
    inv = np.divide(1.0, kz, out=np.zeros_like(kz), where=kz != 0)
    w = 1j * div * inv
    # fix the z-independent part so that w(x, 0) = 0
    w[..., 0] = -w.sum(axis=-1)
    return w[..., None, :, :, :]


def compute_w(v, check=True):
    """Diagnostic vertical velocity ``w = -int_0^z div_h v dz'`` as a scalar field."""
    if check:
        check_in_H(v)
    return SpectralField(v.grid, _compute_w(v.grid, v.data))


def _leray(grid, a):
    out = np.array(a, dtype=complex, copy=True)
    s = out[..., 0]
    kx = grid.kx_d[:, :, 0]
    ky = grid.ky_d[:, :, 0]
    kh2 = kx**2 + ky**2
    inv = np.divide(1.0, kh2, out=np.zeros_like(kh2), where=kh2 > 0)
    dot = (kx * s[..., 0, :, :] + ky * s[..., 1, :, :]) * inv
    s[..., 0, :, :] -= kx * dot
    s[..., 1, :, :] -= ky * dot
    s[..., :, 0, 0] = 0.0
    return out


def leray_project(u):
    """L2-orthogonal projection onto H (zero mean, divergence-free vertical mean)."""
    return SpectralField(u.grid, _leray(u.grid, u.data))


def even_extend(v_half):
    """Even reflection of half-domain samples z in [0, 1] onto the periodic grid."""
    if not v_half.half_domain:
        raise ValueError("even_extend expects half-domain samples")
    g = v_half.grid
    h = g.nz // 2
    vals = np.empty(v_half.values.shape[:-1] + (g.nz,))
    vals[..., : h + 1] = v_half.values
    vals[..., h + 1 :] = v_half.values[..., h - 1 : 0 : -1]
    return SpectralField.from_physical(g, vals)


def restrict(v):
    """Samples of ``v`` on z in [0, 1] (left inverse of :func:`even_extend`)."""
    vals = v.grid.to_physical(v.data)
    return PhysicalField(v.grid, vals[..., : v.grid.nz // 2 + 1], half_domain=True)


def even_residual(v):
    """Relative size of the z-odd part of ``v``."""
    a = v.data
    iz = (-np.arange(v.grid.nz)) % v.grid.nz
    odd = 0.5 * (a - a[..., iz])
    n = v.norm()
    r = float(np.sqrt(v.grid.norm_sq(odd)))
    return r / n if n > 0 else r


def random_field_in_H(grid, seed, spectrum_decay=2.0, fraction=2.0 / 3.0, norm=1.0, even=False):
    """Seeded random field in H with amplitudes ``|k|^-spectrum_decay``.

    Only modes inside the ``fraction`` dealiasing band are populated, so the
    result is exactly representable by the dealiased solver.  ``norm`` rescales
    to the given L2 norm (``None`` keeps the raw amplitudes); ``even`` keeps
    only the z-even part.
    """
    if spectrum_decay <= 0:
        raise ValueError("spectrum_decay must be positive")
    rng = np.random.default_rng(seed)
    shape = (2,) + grid.spectral_shape
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    # enforce the real-field Hermitian structure exactly
    z = grid.to_spectral(grid.to_physical(z))
    k = np.sqrt(grid.k2)
    amp = np.divide(1.0, k**spectrum_decay, out=np.zeros_like(k), where=k > 0)
    a = z * amp * dealias_mask(grid, fraction)
    if even:
        iz = (-np.arange(grid.nz)) % grid.nz
        a = 0.5 * (a + a[..., iz])
    a = _leray(grid, a)
    if norm is not None:
        n = np.sqrt(grid.norm_sq(a))
        if n > 0:
            a = a * (norm / n)
    return SpectralField(grid, a)
