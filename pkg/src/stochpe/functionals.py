"""Scalar observables of a velocity snapshot: energy, Lp, dissipative and fractional norms.

L2-type quantities are evaluated by Parseval.  Lp norms and the gradients of
``|v|^7``, ``|v|^3`` and ``|dz v|^3`` are evaluated on a zero-padded grid
(``oversample`` times finer per axis); the nonlinear powers are formed
pointwise there and differentiated spectrally on the same grid.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import _kernels
from .errors import DegenerateInput
from .grid import SpectralField, check_in_H
from .spectral_ops import fractional_symbol

EPS_MAX = 1.0 / 42.0
OVERSAMPLE = 2

CSV_COLUMNS = ("t", "E", "Ebar", "J", "K", "L", "Lbar", "L_eps", "Y", "X", "Xbar", "phiX")
CSV_VERSION = 1


def _flat(phys):
    """``(..., C, nx, ny, nz)`` -> ``(B, C, n)`` plus the leading shape."""
    lead = phys.shape[:-4]
    b = int(np.prod(lead)) if lead else 1
    return phys.reshape((b,) + phys.shape[-4:-3] + (-1,)), lead


def _grad_sq(grid, a):
    """``||grad a||^2`` for spectral ``a`` (any components)."""
    return grid.norm_sq(a * np.sqrt(grid.k2))


def _dz(grid, a):
    return 1j * grid.kz_d * a


def lp_norm_p(grid, a, p, oversample=OVERSAMPLE):
    """``int |v|^p`` (Euclidean modulus over components) on the padded grid."""
    g = grid.refined(oversample) if oversample > 1 else grid
    phys = grid.to_physical(a, oversample)
    flat, lead = _flat(phys)
    s = _kernels.vector_power_sum(flat, float(p)) * (g.volume / g.npoints)
    return s.reshape(lead) if lead else float(s[0])


def lp_norm(grid, a, p, oversample=OVERSAMPLE):
    if math.isinf(p):
        phys = grid.to_physical(a, oversample)
        flat, lead = _flat(phys)
        m = np.sqrt((flat * flat).sum(axis=1)).max(axis=-1)
        return m.reshape(lead) if lead else float(m[0])
    return np.power(lp_norm_p(grid, a, p, oversample), 1.0 / p)


def _grad_of_power_sq(grid, a, p, oversample=OVERSAMPLE):
    """``||grad(|v|^p)||^2`` with ``|v|^p`` formed on the padded grid."""
    g = grid.refined(oversample) if oversample > 1 else grid
    phys = grid.to_physical(a, oversample)
    flat, lead = _flat(phys)
    powed = _kernels.vector_abs_pow(flat, float(p)).reshape(lead + (1,) + g.shape)
    return _grad_sq(g, g.to_spectral(powed))


def _dz_of_power_norm(grid, a, p, oversample=OVERSAMPLE):
    """``||dz(|v|^p)||_{L2}`` with ``|v|^p`` formed on the padded grid."""
    g = grid.refined(oversample) if oversample > 1 else grid
    phys = grid.to_physical(a, oversample)
    flat, lead = _flat(phys)
    powed = _kernels.vector_abs_pow(flat, float(p)).reshape(lead + (1,) + g.shape)
    return np.sqrt(g.norm_sq(_dz(g, g.to_spectral(powed))))


@dataclass(frozen=True)
class StateFunctionals:
    E: float
    Ebar: float
    J: float
    Jbar: float
    K: float
    Kbar: float
    L: float
    Lbar: float
    L_eps: float
    Lbar_eps: float
    Y: float
    Ybar: float
    X: float
    Xbar: float
    X_eps: float
    Xbar_eps: float
    phiX: float
    eps: float = 0.0

    @property
    def H2_sq(self):
        """Squared H^2 norm taken as ``E^2 + Ebar^2 + Lbar^2``."""
        return self.E**2 + self.Ebar**2 + self.Lbar**2

    def as_dict(self):
        return asdict(self)

    def csv_row(self, t):
        d = self.as_dict()
        d["t"] = t
        return [d[c] for c in CSV_COLUMNS]


FUNCTIONAL_NAMES = tuple(f.name for f in fields(StateFunctionals))


def _functionals_arrays(grid, a, eps, oversample=OVERSAMPLE):
    """All observables for spectral velocity ``a`` with arbitrary leading dims.

    Returns a dict of arrays with the leading shape.
    """
    k = np.sqrt(grid.k2)
    E2 = grid.norm_sq(a)
    Ebar2 = grid.norm_sq(a * k)
    Lbar2 = grid.norm_sq(a * grid.k2)
    Leps2 = grid.norm_sq(a * k * fractional_symbol(grid, eps))
    Lbareps2 = grid.norm_sq(a * k * fractional_symbol(grid, 1.0 + eps))
    dza = _dz(grid, a)
    Kz2 = grid.norm_sq(dza)
    gradKz2 = grid.norm_sq(dza * k)

    J14 = lp_norm_p(grid, a, 14, oversample)
    L6_6 = lp_norm_p(grid, a, 6, oversample)
    K6 = lp_norm_p(grid, dza, 6, oversample)
    Jbar14 = _grad_of_power_sq(grid, a, 7, oversample)
    Kbar6 = _grad_of_power_sq(grid, dza, 3, oversample)
    grad_v3_sq = _grad_of_power_sq(grid, a, 3, oversample)

    X = J14 + K6 + Ebar2
    Xbar = Jbar14 + Kbar6 + Lbar2
    return dict(
        E=np.sqrt(E2),
        Ebar=np.sqrt(Ebar2),
        J=np.power(J14, 1.0 / 14.0),
        Jbar=np.power(Jbar14, 1.0 / 14.0),
        K=np.power(K6, 1.0 / 6.0),
        Kbar=np.power(Kbar6, 1.0 / 6.0),
        L=np.sqrt(Ebar2),
        Lbar=np.sqrt(Lbar2),
        L_eps=np.sqrt(Leps2),
        Lbar_eps=np.sqrt(Lbareps2),
        Y=L6_6 + Kz2,
        Ybar=grad_v3_sq + gradKz2,
        X=X,
        Xbar=Xbar,
        X_eps=J14 + K6 + Leps2,
        Xbar_eps=Jbar14 + Kbar6 + Lbareps2,
        phiX=np.log1p(X),
    )


def compute_functionals(v, eps=0.0, oversample=OVERSAMPLE, check=True):
    """Evaluate every observable of a single snapshot ``v``.

    ``eps`` is the fractional exponent of ``L_eps``/``Lbar_eps`` and must lie
    in ``[0, 1/42]``.
    """
    if not 0.0 <= eps <= EPS_MAX + 1e-15:
        raise ValueError(f"eps must lie in [0, 1/42], got {eps}")
    if check:
        check_in_H(v)
    d = _functionals_arrays(v.grid, v.data, eps, oversample)
    return StateFunctionals(eps=float(eps), **{k: float(x) for k, x in d.items()})


def batch_functionals(grid, a, eps=0.0, oversample=OVERSAMPLE, chunk=32):
    """Observables for a batch ``(B, 2, ...)``; returns dict name -> ``(B,)`` array."""
    out = {}
    for start in range(0, a.shape[0], chunk):
        d = _functionals_arrays(grid, a[start : start + chunk], eps, oversample)
        for k, x in d.items():
            out.setdefault(k, []).append(np.atleast_1d(x))
    return {k: np.concatenate(x) for k, x in out.items()}


def check_vorticity_interpolation(v, p, oversample=3):
    """Margins of ``||dz v||_p <= C ||v||_q^{1/4} ||dz(|dz v|^3)||_2^{1/4}``.

    ``q = 2p / (8 - p)`` (``q = inf`` at ``p = 8``) and ``C = ((p - 1) / 3)^{1/4}``.
    Returns ``(lhs, rhs, ratio)``; raises :class:`DegenerateInput` if ``dz v`` vanishes.
    """
    if not 4.0 <= p <= 8.0:
        raise ValueError("p must lie in [4, 8]")
    g = v.grid
    dza = _dz(g, v.data)
    if g.norm_sq(dza) == 0.0:
        raise DegenerateInput("dz v vanishes identically; the ratio is undefined")
    lhs = float(lp_norm(g, dza, p, oversample))
    q = math.inf if p == 8 else 2.0 * p / (8.0 - p)
    vq = float(lp_norm(g, v.data, q, oversample))
    dz_cube = float(_dz_of_power_norm(g, dza, 3, oversample))
    c = ((p - 1.0) / 3.0) ** 0.25
    rhs = c * vq**0.25 * dz_cube**0.25
    return lhs, rhs, lhs / rhs


def interpolation_ratios(v, oversample=OVERSAMPLE):
    """Empirical constants in the J^14 and K^6 interpolation bounds.

    ``J^14 / (Ebar^{14/3} Jbar^{28/3} + Ebar^14)`` and
    ``K^6 / (Ebar^{3/2} Kbar^{9/2} + Ebar^6)``; both are scale invariant.
    """
    f = compute_functionals(v, 0.0, oversample)
    rj = f.J**14 / (f.Ebar ** (14 / 3) * f.Jbar ** (28 / 3) + f.Ebar**14)
    rk = f.K**6 / (f.Ebar**1.5 * f.Kbar**4.5 + f.Ebar**6)
    return rj, rk


def log_moment_series(traj):
    """Per-time ``phiX``, ``phiX_eps``, ``log(1+Y)`` and ``log(1+Xbar)`` of a trajectory.

    Uses stored functionals when present, otherwise recomputes them from the
    stored snapshots.
    """
    if traj.functionals:
        fs = traj.functionals
    else:
        fs = [compute_functionals(s, traj.eps) for s in traj.snapshots]
    return {
        "t": np.asarray(traj.times, dtype=float),
        "phiX": np.array([f.phiX for f in fs]),
        "phiX_eps": np.array([math.log1p(f.X_eps) for f in fs]),
        "log1pY": np.array([math.log1p(f.Y) for f in fs]),
        "log1pXbar": np.array([math.log1p(f.Xbar) for f in fs]),
    }


def zero_functionals(eps=0.0):
    return StateFunctionals(eps=eps, **{k: 0.0 for k in FUNCTIONAL_NAMES if k != "eps"})


def as_field(grid, a):
    return SpectralField(grid, a)
