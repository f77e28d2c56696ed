"""Fourier-space operators: multipliers, the dealiased advection term, pressure and vorticity drift."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError
from .grid import (
    SpectralField,
    _compute_w,
    _leray,
    check_in_H,
    dealias_mask,
)

MULTIPLIER_KINDS = (
    "gradient_h",
    "gradient_z",
    "laplacian",
    "inv_laplacian_h",
    "heat_semigroup",
    "fractional",
)


@dataclass(frozen=True)
class DealiasRule:
    """Per-axis truncation: modes with ``|n| >= fraction * N / 2`` are zeroed."""

    fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError("dealias fraction must lie in (0, 1]")

    def mask(self, grid):
        return dealias_mask(grid, self.fraction)


@dataclass(frozen=True)
class MultiplierSpec:
    """A diagonal Fourier multiplier.

    ``gradient_h`` uses ``axis`` (0 for x, 1 for y); ``heat_semigroup`` uses
    ``dt``; ``fractional`` uses ``s`` and multiplies by ``|k|^s``.
    """

    kind: str
    s: float = 0.0
    dt: float = 0.0
    axis: int = 0

    def __post_init__(self):
        if self.kind not in MULTIPLIER_KINDS:
            raise ValueError(f"unknown multiplier kind {self.kind!r}")

    def symbol(self, grid):
        if self.kind == "gradient_h":
            k = grid.kx_d if self.axis == 0 else grid.ky_d
            return 1j * np.broadcast_to(k, grid.spectral_shape)
        if self.kind == "gradient_z":
            return 1j * np.broadcast_to(grid.kz_d, grid.spectral_shape)
        if self.kind == "laplacian":
            return -grid.k2
        if self.kind == "inv_laplacian_h":
            kh2 = np.broadcast_to(grid.kh2, grid.spectral_shape)
            # horizontal-mean modes are pinned to zero
            return -np.divide(1.0, kh2, out=np.zeros(grid.spectral_shape), where=kh2 > 0)
        if self.kind == "heat_semigroup":
            return np.exp(-grid.k2 * self.dt)
        return fractional_symbol(grid, self.s)


def fractional_symbol(grid, s):
    k = np.sqrt(grid.k2)
    if s == 0:
        return np.ones_like(k)
    return np.power(k, s, out=np.zeros_like(k), where=k > 0)


def apply_multiplier(spec, u):
    """Multiply every component of ``u`` mode-wise by ``spec``'s symbol."""
    if spec.kind == "fractional" and spec.s < 0:
        if np.any(np.abs(u.data[:, 0, 0, 0]) > 0):
            raise DomainError("negative fractional power of a field with nonzero mean")
    return SpectralField(u.grid, u.data * spec.symbol(u.grid))


# nonlinear terms ----------------------------------------------------------


def _physical_vw(grid, a):
    """Physical (v1, v2, w) for spectral velocity ``a``: ``(..., 3, nx, ny, nz)``."""
    w = _compute_w(grid, a)
    return grid.to_physical(np.concatenate([a, w], axis=-4))


def _nonlinear(grid, a, mask):
    """Dealiased ``v . grad_h v + w dz v`` in flux form; ``a`` must be band-limited by ``mask``."""
    phys = _physical_vw(grid, a)
    fluxes = _kernels.flux_products(phys)
    fhat = grid.to_spectral(fluxes)
    return _kernels.flux_divergence(fhat, grid.kx_d, grid.ky_d, grid.kz_d, mask)


def nonlinear_term(v, rule=DealiasRule()):
    """Advection ``N(v) = v . grad_h v + w dz v`` (not projected).

    The input is truncated by ``rule`` before forming products on the
    collocation grid, and the result is truncated again.
    """
    check_in_H(v)
    g = v.grid
    mask = rule.mask(g)
    return SpectralField(g, _nonlinear(g, v.data * mask, mask))


def _deriv(grid, a, axis):
    k = (grid.kx_d, grid.ky_d, grid.kz_d)[axis]
    return 1j * k * a


def advective_form(v, rule=DealiasRule()):
    """``v . grad_h v + w dz v`` evaluated in advective (non-flux) form; used as a cross-check."""
    check_in_H(v)
    g = v.grid
    mask = rule.mask(g)
    a = v.data * mask
    w = _compute_w(g, a)
    stack = np.concatenate(
        [a, _deriv(g, a, 0), _deriv(g, a, 1), _deriv(g, a, 2), w], axis=0
    )
    p = g.to_physical(stack)
    v1, v2, dxv1, dxv2, dyv1, dyv2, dzv1, dzv2, wp = p
    n1 = v1 * dxv1 + v2 * dyv1 + wp * dzv1
    n2 = v1 * dxv2 + v2 * dyv2 + wp * dzv2
    return SpectralField(g, g.to_spectral(np.stack([n1, n2])) * mask)


def _pressure_from_source(grid, src):
    """Gradient of p with -Lap_h p = div_h(vertical average of src), zero horizontal mean."""
    # vertical average = (1/2) M, i.e. the m = 0 slice
    s = src[..., 0]
    kx = grid.kx_d[:, :, 0]
    ky = grid.ky_d[:, :, 0]
    kh2 = kx**2 + ky**2
    inv = np.divide(1.0, kh2, out=np.zeros_like(kh2), where=kh2 > 0)
    dot = (kx * s[..., 0, :, :] + ky * s[..., 1, :, :]) * inv
    out = np.zeros_like(src)
    out[..., 0, :, :, 0] = -kx * dot
    out[..., 1, :, :, 0] = -ky * dot
    return out


def pressure_gradient(v, rule=DealiasRule(), form="flux"):
    """Horizontal pressure gradient from the explicit Riesz-transform formula.

    ``form="flux"`` uses the source ``v . grad_h v + v div_h v``; ``form="advective"``
    uses ``v . grad_h v + w dz v``.  Both agree for ``v`` in H.
    """
    check_in_H(v)
    g = v.grid
    mask = rule.mask(g)
    a = v.data * mask
    if form == "flux":
        phys = g.to_physical(a)
        v1, v2 = phys
        f = g.to_spectral(np.stack([v1 * v1, v1 * v2, v2 * v2])) * mask
        kx, ky = g.kx_d, g.ky_d
        src = np.stack([1j * (kx * f[0] + ky * f[1]), 1j * (kx * f[1] + ky * f[2])])
    elif form == "advective":
        src = advective_form(v, rule).data
    else:
        raise ValueError(f"unknown pressure source form {form!r}")
    return SpectralField(g, _pressure_from_source(g, src))


def vorticity_rhs(v, rule=DealiasRule()):
    """Drift of ``theta = dz v``:
    ``-(v . grad_h theta + w dz theta + theta . grad_h v - (div_h v) theta - Lap theta)``.
    """
    check_in_H(v)
    g = v.grid
    mask = rule.mask(g)
    a = v.data * mask
    th = _deriv(g, a, 2)
    w = _compute_w(g, a)
    stack = np.concatenate(
        [a, _deriv(g, a, 0), _deriv(g, a, 1), w, th, _deriv(g, th, 0), _deriv(g, th, 1), _deriv(g, th, 2)],
        axis=0,
    )
    p = g.to_physical(stack)
    v1, v2, dxv1, dxv2, dyv1, dyv2, wp, t1, t2, dxt1, dxt2, dyt1, dyt2, dzt1, dzt2 = p
    div = dxv1 + dyv2
    r1 = (v1 * dxt1 + v2 * dyt1 + wp * dzt1) + (t1 * dxv1 + t2 * dyv1) - div * t1
    r2 = (v1 * dxt2 + v2 * dyt2 + wp * dzt2) + (t1 * dxv2 + t2 * dyv2) - div * t2
    nl = g.to_spectral(np.stack([r1, r2])) * mask
    return SpectralField(g, -nl - g.k2 * th)


def vorticity_transport(v, rule=DealiasRule()):
    """Transport part ``v . grad_h theta + w dz theta`` with ``theta = dz v``."""
    check_in_H(v)
    g = v.grid
    mask = rule.mask(g)
    a = v.data * mask
    th = _deriv(g, a, 2)
    w = _compute_w(g, a)
    stack = np.concatenate([a, w, th, _deriv(g, th, 0), _deriv(g, th, 1), _deriv(g, th, 2)], axis=0)
    v1, v2, wp, t1, t2, dxt1, dxt2, dyt1, dyt2, dzt1, dzt2 = g.to_physical(stack)
    r1 = v1 * dxt1 + v2 * dyt1 + wp * dzt1
    r2 = v1 * dxt2 + v2 * dyt2 + wp * dzt2
    return SpectralField(g, g.to_spectral(np.stack([r1, r2])) * mask)


def projected_drift(v, rule=DealiasRule()):
    """``-Lap v + P_H N(v)``: the drift appearing in the mild/strong formulation."""
    n = nonlinear_term(v, rule)
    return SpectralField(v.grid, v.grid.k2 * v.data + _leray(v.grid, n.data))
