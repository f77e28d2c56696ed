"""Pure-numpy implementations of the fused pointwise kernels.

Semantics are the reference for the compiled versions in ``_ckernels``; both
must agree elementwise (products and sums are evaluated in the same order).
"""
import numpy as np


def flux_products(vw):
    """Quadratic fluxes from physical ``(..., 3, nx, ny, nz)`` = (v1, v2, w).

    Returns ``(..., 5, nx, ny, nz)`` holding v1*v1, v1*v2, v2*v2, w*v1, w*v2.
    """
    v1 = vw[..., 0, :, :, :]
    v2 = vw[..., 1, :, :, :]
    w = vw[..., 2, :, :, :]
    out = np.empty(vw.shape[:-4] + (5,) + vw.shape[-3:])
    np.multiply(v1, v1, out=out[..., 0, :, :, :])
    np.multiply(v1, v2, out=out[..., 1, :, :, :])
    np.multiply(v2, v2, out=out[..., 2, :, :, :])
    np.multiply(w, v1, out=out[..., 3, :, :, :])
    np.multiply(w, v2, out=out[..., 4, :, :, :])
    return out


def flux_divergence(fhat, kx, ky, kz, mask):
    """Spectral divergence of the flux tensor, truncated by ``mask``.

    ``fhat`` is ``(..., 5, nx, nyh, nz)``; returns ``(..., 2, nx, nyh, nz)`` with
    N1 = i(kx F0 + ky F1 + kz F3) and N2 = i(kx F1 + ky F2 + kz F4).
    """
    f = [fhat[..., c, :, :, :] for c in range(5)]
    out = np.empty(fhat.shape[:-4] + (2,) + fhat.shape[-3:], dtype=complex)
    out[..., 0, :, :, :] = 1j * (kx * f[0] + ky * f[1] + kz * f[3]) * mask
    out[..., 1, :, :, :] = 1j * (kx * f[1] + ky * f[2] + kz * f[4]) * mask
    return out


def etd_update(a, nl, noise, decay, dt):
    """Exponential Euler update ``decay * (a - dt * nl + noise)``; ``nl``/``noise`` may be None."""
    x = a
    if nl is not None:
        x = x - dt * nl
    if noise is not None:
        x = x + noise
    return decay * x


def _halfpow(s, p):
    """``s ** (p / 2)``; integer ``p`` uses repeated products and one square root."""
    if p >= 0 and p == int(p):
        n, frac = divmod(int(p), 2)
        r = np.ones_like(s)
        for _ in range(n):
            r = r * s
        if frac:
            r = r * np.sqrt(s)
        return r
    return np.power(s, 0.5 * p)


def vector_power_sum(values, p):
    """Per-batch ``sum_points |v|^p`` for physical ``(B, C, n)`` arrays."""
    return vector_abs_pow(values, p).sum(axis=-1)


def vector_abs_pow(values, p):
    """Pointwise ``|v|^p`` for physical ``(B, C, n)`` arrays; returns ``(B, n)``."""
    s = (values * values).sum(axis=1)
    return _halfpow(s, p)
