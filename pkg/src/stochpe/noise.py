"""Finite-dimensional noise ``sigma(v) dW = g(v) sum_k alpha_k e_k dW_k``.

Shapes are single Fourier modes ``dir * h(2 pi (n1 x + n2 y)) * cos(pi m z)``
with ``h`` a cosine or sine and unit L2 norm.  Baroclinic shapes (``m != 0``)
have zero vertical integral; barotropic ones use the direction perpendicular
to ``(n1, n2)``, so every shape lies in H structurally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import GridMismatch
from .functionals import lp_norm_p
from .grid import SpectralField, _constraint_residual, dealias_mask

GAINS = ("additive", "bounded")
PHASES = ("c", "s")
DIRECTIONS = ("x", "y", "p")


def _gain(kind, norm_sq):
    if kind == "additive":
        return np.ones_like(norm_sq)
    return 1.0 / np.sqrt(1.0 + norm_sq)


def _parse_pol(pol, m):
    """``'cx'``, ``'sy'``, ``'cp'`` ... -> (phase, direction); a bare phase picks the default direction."""
    pol = pol.strip().lower()
    if len(pol) == 1:
        pol = pol + ("p" if m == 0 else "x")
    if len(pol) != 2 or pol[0] not in PHASES or pol[1] not in DIRECTIONS:
        raise ValueError(f"bad polarization {pol!r}; expected one of c/s followed by x/y/p")
    return pol[0], pol[1]


def mode_shape(grid, n1, n2, m, pol):
    """Unit-norm spectral shape for the label ``(n1, n2, m, pol)``."""
    phase, direction = _parse_pol(pol, m)
    if m == 0 and direction != "p":
        raise ValueError("barotropic (m = 0) modes must use the perpendicular polarization 'p'")
    if n1 == 0 and n2 == 0:
        if m == 0:
            raise ValueError("the (0, 0, 0) mode is the mean and is excluded from H")
        if phase == "s":
            raise ValueError("sine phase of a horizontally constant mode vanishes")
        if direction == "p":
            raise ValueError("perpendicular polarization is undefined for n1 = n2 = 0")
    mask = dealias_mask(grid)
    kmax = (grid.nx // 2, grid.ny // 2, grid.nz // 2)
    for n, cap in zip((n1, n2, m), kmax):
        if abs(n) >= cap:
            raise ValueError(f"mode ({n1}, {n2}, {m}) is not represented on {grid}")
    x, y, z = grid.coords()
    arg = 2.0 * np.pi * (n1 * x + n2 * y)
    h = np.cos(arg) if phase == "c" else np.sin(arg)
    prof = h * np.cos(np.pi * m * z)
    if direction == "x":
        d = (1.0, 0.0)
    elif direction == "y":
        d = (0.0, 1.0)
    else:
        r = math.hypot(n1, n2)
        d = (-n2 / r, n1 / r)
    vals = np.stack([d[0] * prof, d[1] * prof])
    shape = grid.to_spectral(vals)
    if np.any(np.abs(shape[:, ~np.broadcast_to(mask, grid.spectral_shape)]) > 1e-12):
        raise ValueError(f"mode ({n1}, {n2}, {m}) lies outside the dealiasing band")
    # drop transform roundoff so the shape is an exact single mode
    shape = np.where(np.abs(shape) > 1e-12, shape, 0.0) * mask
    return shape / np.sqrt(grid.norm_sq(shape))


@dataclass(frozen=True)
class NoiseMode:
    """One noise direction: ``amplitude * shape``.

    ``label`` is the ``(n1, n2, m, pol)`` tuple for modes built by
    :meth:`from_label`; hand-built shapes carry ``None``.
    """

    shape: SpectralField
    amplitude: float
    label: tuple | None = None

    def __post_init__(self):
        if not self.amplitude >= 0.0:
            raise ValueError("noise amplitude must be nonnegative")

    @classmethod
    def from_label(cls, grid, n1, n2, m, pol, amplitude):
        data = mode_shape(grid, int(n1), int(n2), int(m), pol)
        return cls(SpectralField(grid, data), float(amplitude), (int(n1), int(n2), int(m), pol))


@dataclass(frozen=True)
class WienerIncrement:
    """Brownian increments, one per mode; ``dw`` has shape ``(..., n_modes)``."""

    dw: np.ndarray
    dt: float


@dataclass(frozen=True, eq=False)
class NoiseModel:
    grid: object
    modes: tuple = ()
    gain: str = "additive"

    def __post_init__(self):
        if self.gain not in GAINS:
            raise ValueError(f"unknown gain law {self.gain!r}; expected one of {GAINS}")
        object.__setattr__(self, "modes", tuple(self.modes))
        for md in self.modes:
            if md.shape.grid != self.grid:
                raise GridMismatch("noise shape grid differs from model grid")

    @classmethod
    def from_tuples(cls, grid, tuples, gain="additive"):
        """Build from ``(n1, n2, m, pol, alpha)`` tuples."""
        return cls(grid, tuple(NoiseMode.from_label(grid, *t) for t in tuples), gain)

    @property
    def n_modes(self):
        return len(self.modes)

    @cached_property
    def amplitudes(self):
        return np.array([md.amplitude for md in self.modes], dtype=float)

    @cached_property
    def shape_norms_sq(self):
        return np.array([float(md.shape.grid.norm_sq(md.shape.data)) for md in self.modes])

    @cached_property
    def hs_budget(self):
        """``sum_k alpha_k^2 ||e_k||^2``, the Hilbert-Schmidt norm at unit gain."""
        return float(np.sum(self.amplitudes**2 * self.shape_norms_sq))

    @cached_property
    def _sparse(self):
        """Per-mode flat indices and values of the nonzero coefficients."""
        out = []
        for md in self.modes:
            flat = md.shape.data.reshape(-1)
            idx = np.flatnonzero(flat)
            out.append((idx, flat[idx].copy()))
        return tuple(out)

    @property
    def is_additive(self):
        return self.gain == "additive"

    def gain_factor(self, norm_sq):
        return _gain(self.gain, np.asarray(norm_sq, dtype=float))

    def labels(self):
        return [md.label for md in self.modes]


def _noise_field(model, dw, gains):
    """``(B, 2, ...)`` array ``sum_k gains * alpha_k * e_k * dw_k`` for ``dw`` of shape ``(B, K)``."""
    b = dw.shape[0]
    out = np.zeros((b,) + (2,) + model.grid.spectral_shape, dtype=complex)
    flat = out.reshape(b, -1)
    coef = gains[:, None] * model.amplitudes[None, :] * dw
    for k, (idx, vals) in enumerate(model._sparse):
        flat[:, idx] += coef[:, k, None] * vals[None, :]
    return out


def sample_increment(model, dt, rng):
    """Independent ``N(0, dt)`` increments for every mode of ``model``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return WienerIncrement(rng.standard_normal(model.n_modes) * math.sqrt(dt), float(dt))


def apply_sigma(model, v, inc):
    """``sigma(v) dW = g(v) sum_k alpha_k e_k dW_k``."""
    if v.grid != model.grid:
        raise GridMismatch(f"state grid {v.grid} differs from noise grid {model.grid}")
    dw = np.asarray(inc.dw, dtype=float).reshape(1, -1)
    if dw.shape[1] != model.n_modes:
        raise ValueError(f"increment has {dw.shape[1]} entries, model has {model.n_modes} modes")
    g = model.gain_factor(np.atleast_1d(v.grid.norm_sq(v.data)))
    return SpectralField(v.grid, _noise_field(model, dw, g)[0])


def hs_norm_sq(model, v):
    """``sum_k ||sigma_k(v)||^2 = g(v)^2 sum_k alpha_k^2 ||e_k||^2``."""
    g = model.gain_factor(v.grid.norm_sq(v.data))
    return float(g**2 * model.hs_budget)


@dataclass
class AdmissibilityReport:
    """Outcome of :func:`check_admissibility`.

    ``C_L14`` and ``C_W1z6`` are the smallest constants consistent with the
    samples for the L14 and ``dz``-L6 growth bounds; ``C_sigma`` is the
    Hilbert-Schmidt budget, valid with ``eps_sigma = 0`` for both gain laws.
    """

    constraint_ok: bool
    mean_ok: bool
    bounds_ok: bool
    C_sigma: float
    eps_sigma: float
    C_L14: float
    C_W1z6: float
    worst_constraint: float
    failing_modes: list = field(default_factory=list)

    @property
    def passed(self):
        return self.constraint_ok and self.mean_ok and self.bounds_ok

    def lines(self):
        flag = lambda ok: "pass" if ok else "fail"
        return [
            f"noise.constraint={flag(self.constraint_ok)}",
            f"noise.mean={flag(self.mean_ok)}",
            f"noise.bounds={flag(self.bounds_ok)}",
            f"noise.C_sigma={self.C_sigma:.17g}",
            f"noise.eps_sigma={self.eps_sigma:.17g}",
            f"noise.C_L14={self.C_L14:.17g}",
            f"noise.C_W1z6={self.C_W1z6:.17g}",
        ]


def check_admissibility(model, samples=6, seed=0, tol=1e-12):
    """Check the structural constraint of every shape and estimate the growth constants.

    For random states ``v`` (including 0 and large multiples) the ratios
    ``sum ||sigma_k(v)||_L14^2 / (1 + ||v||_L14^2)`` and
    ``sum ||dz sigma_k(v)||_L6^2 / (1 + ||dz v||_L6^2)`` are maximized.
    Both gains are bounded by 1, so the maxima never exceed the analytic
    constants at ``v = 0``; ``bounds_ok`` records that this holds.
    """
    from .grid import random_field_in_H

    g = model.grid
    worst = 0.0
    mean_ok = True
    failing = []
    for k, md in enumerate(model.modes):
        r = float(_constraint_residual(g, md.shape.data))
        worst = max(worst, r)
        if not r <= tol:
            failing.append(k)
        if abs(md.shape.data[:, 0, 0, 0]).max() > tol:
            mean_ok = False
            if k not in failing:
                failing.append(k)
    if model.n_modes == 0:
        return AdmissibilityReport(True, True, True, 0.0, 0.0, 0.0, 0.0, 0.0)

    a = model.amplitudes
    l14 = np.array([lp_norm_p(g, md.shape.data, 14) ** (1.0 / 7.0) for md in model.modes])
    dz = [1j * g.kz_d * md.shape.data for md in model.modes]
    w6 = np.array([lp_norm_p(g, d, 6) ** (1.0 / 3.0) for d in dz])
    c14 = float(np.sum(a**2 * l14))
    c6 = float(np.sum(a**2 * w6))

    states = [np.zeros((2,) + g.spectral_shape, dtype=complex)]
    for s in range(samples):
        base = random_field_in_H(g, seed + s).data
        states.append(base * 10.0 ** (s - samples // 2))
    r14 = r6 = 0.0
    for st in states:
        gain2 = float(model.gain_factor(g.norm_sq(st))) ** 2
        v14 = float(lp_norm_p(g, st, 14)) ** (1.0 / 7.0)
        v6 = float(lp_norm_p(g, 1j * g.kz_d * st, 6)) ** (1.0 / 3.0)
        r14 = max(r14, gain2 * c14 / (1.0 + v14))
        r6 = max(r6, gain2 * c6 / (1.0 + v6))
    bounds_ok = bool(np.isfinite(r14) and np.isfinite(r6) and r14 <= c14 * (1 + 1e-12) and r6 <= c6 * (1 + 1e-12))
    return AdmissibilityReport(
        constraint_ok=worst <= tol,
        mean_ok=mean_ok,
        bounds_ok=bounds_ok,
        C_sigma=model.hs_budget,
        eps_sigma=0.0,
        C_L14=r14,
        C_W1z6=r6,
        worst_constraint=worst,
        failing_modes=failing,
    )


def lowest_mode_labels(grid, count, fraction=2.0 / 3.0):
    """The ``count`` lowest-``|k|`` labels inside the dealiasing band, in a fixed order."""
    cut = (fraction * grid.nx / 2, fraction * grid.ny / 2, fraction * grid.nz / 2)
    labels = []
    for m in range(0, int(math.ceil(cut[2]))):
        for n1 in range(-int(cut[0]), int(cut[0]) + 1):
            for n2 in range(-int(cut[1]), int(cut[1]) + 1):
                if abs(n1) >= cut[0] or abs(n2) >= cut[1] or m >= cut[2]:
                    continue
                upper = n1 > 0 or (n1 == 0 and n2 > 0)
                if m == 0:
                    if upper:
                        labels += [(n1, n2, 0, "cp"), (n1, n2, 0, "sp")]
                elif n1 == 0 and n2 == 0:
                    labels += [(0, 0, m, "cx"), (0, 0, m, "cy")]
                elif upper:
                    labels += [(n1, n2, m, p) for p in ("cx", "sx", "cy", "sy")]

    def k2(lab):
        n1, n2, m, _ = lab
        return (2 * math.pi * n1) ** 2 + (2 * math.pi * n2) ** 2 + (math.pi * m) ** 2

    labels.sort(key=lambda lab: (k2(lab), lab[2], lab[0], lab[1], lab[3]))
    return labels[:count]


def reference_noise(grid, count=16, total=1.0, decay=2.0, gain="additive"):
    """Smooth noise on the ``count`` lowest modes with ``alpha_k ~ |k|^-decay``.

    Amplitudes are scaled so that ``sum alpha_k^2 = total``.
    """
    labels = lowest_mode_labels(grid, count)
    kk = np.array(
        [math.sqrt((2 * math.pi * a) ** 2 + (2 * math.pi * b) ** 2 + (math.pi * m) ** 2) for a, b, m, _ in labels]
    )
    alpha = kk**-decay
    alpha *= math.sqrt(total / float(np.sum(alpha**2)))
    return NoiseModel.from_tuples(grid, [lab + (al,) for lab, al in zip(labels, alpha)], gain)
