"""Running path statistics and first hitting times of sigma_gamma, tau_kappa and rho_lambda.

Time integrals use the left-endpoint rule: at time ``t_n`` the stored
integral covers ``[0, t_n)`` with integrand values from ``t_0 .. t_{n-1}``,
the hit tests are made, and only then is the integrand at ``t_n`` added.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import binomtest

from .errors import EmptyEnsemble
from .functionals import lp_norm_p

INF = math.inf


@dataclass(frozen=True)
class StoppingConfig:
    gamma: float = 10.0
    kappa: float = 100.0
    lam: float = 10.0

    def __post_init__(self):
        for name in ("gamma", "kappa", "lam"):
            if not getattr(self, name) >= 0.0:
                raise ValueError(f"stopping threshold {name} must be nonnegative")

    def check_gamma(self, l6_4_initial):
        """Warn if ``gamma < 2 + ||v0||_L6^4``."""
        if self.gamma < 2.0 + l6_4_initial:
            warnings.warn(
                f"gamma={self.gamma} is below 2 + ||v0||_L6^4 = {2.0 + l6_4_initial:.6g}",
                stacklevel=2,
            )


def stopping_quantities(grid, a):
    """Per-state inputs of the stopping statistics for spectral ``a`` of shape ``(B, 2, ...)``.

    Returns ``l6_4 = ||v||_L6^4``, ``sig = ||dz v||^2 ||grad dz v||^2``,
    ``tau = G + D + G D`` with ``G = ||grad v||^2``, ``D = ||Lap v||^2``, and
    ``h2 = ||v||^2 + G + D``.
    """
    k = np.sqrt(grid.k2)
    dz = 1j * grid.kz_d * a
    A = grid.norm_sq(dz)
    B = grid.norm_sq(dz * k)
    G = grid.norm_sq(a * k)
    D = grid.norm_sq(a * grid.k2)
    E2 = grid.norm_sq(a)
    l6 = np.atleast_1d(lp_norm_p(grid, a, 6, 2))
    return {
        "l6_4": np.power(l6, 2.0 / 3.0),
        "sig": A * B,
        "tau": G + D + G * D,
        "h2": E2 + G + D,
        "E2": E2,
        "G": G,
    }


@dataclass(frozen=True)
class StoppingRecord:
    """Running statistics and hit times (``inf`` if not yet hit) for one trajectory."""

    config: StoppingConfig
    running_sup_L6_4: float = 0.0
    running_int_sigma: float = 0.0
    running_int_tau: float = 0.0
    sup_t_H2: float = 0.0
    hit_sigma: float = INF
    hit_tau: float = INF
    hit_rho: float = INF


def update(record, t, q, dt):
    """Advance ``record`` by the state at time ``t`` (quantities ``q`` as from
    :func:`stopping_quantities`, scalars) over a step of length ``dt``."""
    c = record.config
    sup = max(record.running_sup_L6_4, float(q["l6_4"]))
    hs, ht, hr = record.hit_sigma, record.hit_tau, record.hit_rho
    if hs == INF and sup + record.running_int_sigma > c.gamma:
        hs = t
    if ht == INF and record.running_int_tau > c.kappa:
        ht = t
    th2 = t * float(q["h2"])
    if hr == INF and th2 >= c.lam and th2 > 0.0:
        hr = t
    return replace(
        record,
        running_sup_L6_4=sup,
        running_int_sigma=record.running_int_sigma + float(q["sig"]) * dt,
        running_int_tau=record.running_int_tau + float(q["tau"]) * dt,
        sup_t_H2=max(record.sup_t_H2, th2),
        hit_sigma=hs,
        hit_tau=ht,
        hit_rho=hr,
    )


class StoppingTracker:
    """Vectorized :func:`update` over a batch of members; elementwise identical arithmetic."""

    FIELDS = ("sup", "int_sigma", "int_tau", "int_tau_lag", "sup_th2", "hit_sigma", "hit_tau", "hit_rho")

    def __init__(self, config, n):
        self.config = config
        self.sup = np.zeros(n)
        self.int_sigma = np.zeros(n)
        self.int_tau = np.zeros(n)
        # integral over [0, t_{n-1}) while time t_n is pending: tau_kappa < t_n iff lag > kappa
        self.int_tau_lag = np.zeros(n)
        self.sup_th2 = np.zeros(n)
        self.hit_sigma = np.full(n, INF)
        self.hit_tau = np.full(n, INF)
        self.hit_rho = np.full(n, INF)

    def update(self, t, q, dt, active=None):
        c = self.config
        act = np.ones(self.sup.shape, bool) if active is None else active
        sup = np.where(act, np.maximum(self.sup, q["l6_4"]), self.sup)
        self.hit_sigma = np.where(act & (self.hit_sigma == INF) & (sup + self.int_sigma > c.gamma), t, self.hit_sigma)
        self.hit_tau = np.where(act & (self.hit_tau == INF) & (self.int_tau > c.kappa), t, self.hit_tau)
        th2 = t * q["h2"]
        hit = act & (self.hit_rho == INF) & (th2 >= c.lam) & (th2 > 0.0)
        self.hit_rho = np.where(hit, t, self.hit_rho)
        self.sup = sup
        self.int_sigma = np.where(act, self.int_sigma + q["sig"] * dt, self.int_sigma)
        self.int_tau_lag = np.where(act, self.int_tau, self.int_tau_lag)
        self.int_tau = np.where(act, self.int_tau + q["tau"] * dt, self.int_tau)
        self.sup_th2 = np.where(act, np.maximum(self.sup_th2, th2), self.sup_th2)

    def records(self):
        return [
            StoppingRecord(
                self.config,
                float(self.sup[i]),
                float(self.int_sigma[i]),
                float(self.int_tau[i]),
                float(self.sup_th2[i]),
                float(self.hit_sigma[i]),
                float(self.hit_tau[i]),
                float(self.hit_rho[i]),
            )
            for i in range(self.sup.size)
        ]

    def state_arrays(self):
        return {f"stop_{k}": getattr(self, k).copy() for k in self.FIELDS}

    def load_arrays(self, d):
        for k in self.FIELDS:
            setattr(self, k, np.array(d[f"stop_{k}"], dtype=float))


def recompute_offline(series, config, dt):
    """Replay per-step quantity series (dict of 1-D arrays plus ``t``) through :func:`update`."""
    rec = StoppingRecord(config)
    for n, t in enumerate(series["t"]):
        rec = update(rec, float(t), {k: series[k][n] for k in ("l6_4", "sig", "tau", "h2")}, dt)
    return rec


def hit_times(series, dt, gammas=(), kappas=(), lams=()):
    """First hitting times for many thresholds at once from per-step series.

    ``series`` arrays have shape ``(n_steps,)`` or ``(B, n_steps)``.  Uses the
    same left-endpoint accumulation as :func:`update`.
    """
    t = np.asarray(series["t"], dtype=float)
    sig = np.atleast_2d(series["sig"])
    tau = np.atleast_2d(series["tau"])
    l6 = np.atleast_2d(series["l6_4"])
    h2 = np.atleast_2d(series["h2"])
    # integral before adding the current step, accumulated sequentially
    int_sig = np.zeros_like(sig)
    int_tau = np.zeros_like(tau)
    acc_s = np.zeros(sig.shape[0])
    acc_t = np.zeros(sig.shape[0])
    for n in range(sig.shape[1]):
        int_sig[:, n] = acc_s
        int_tau[:, n] = acc_t
        acc_s = acc_s + sig[:, n] * dt
        acc_t = acc_t + tau[:, n] * dt
    sup = np.maximum.accumulate(l6, axis=1)
    th2 = t[None, :] * h2

    def first(cond):
        idx = np.argmax(cond, axis=1)
        return np.where(cond.any(axis=1), t[idx], INF)

    return {
        "sigma": {g: first(sup + int_sig > g) for g in gammas},
        "tau": {k: first(int_tau > k) for k in kappas},
        "rho": {l: first((th2 >= l) & (th2 > 0.0)) for l in lams},
    }


@dataclass(frozen=True)
class Exceedance:
    p: float
    lo: float
    hi: float
    count: int
    n: int


def _wilson(count, n):
    ci = binomtest(count, n).proportion_ci(confidence_level=0.95, method="wilson")
    return Exceedance(count / n, float(ci.low), float(ci.high), count, n)


def empirical_exceedance(records, t):
    """``P[sigma_gamma <= t]``, ``P[tau_kappa < t]`` and ``P[rho_lambda < t]`` with Wilson 95% intervals."""
    records = list(records)
    if not records:
        raise EmptyEnsemble("no stopping records")
    n = len(records)
    return {
        "sigma": _wilson(sum(r.hit_sigma <= t for r in records), n),
        "tau": _wilson(sum(r.hit_tau < t for r in records), n),
        "rho": _wilson(sum(r.hit_rho < t for r in records), n),
    }


def exceedance_from_hits(hits, t, strict=True):
    hits = np.asarray(hits, dtype=float)
    if hits.size == 0:
        raise EmptyEnsemble("no hit times")
    count = int(np.sum(hits < t) if strict else np.sum(hits <= t))
    return _wilson(count, hits.size)


STOPPING_CSV_COLUMNS = ("seed", "hit_sigma", "hit_tau", "hit_rho", "gamma", "kappa", "lambda")


def stopping_rows(seeds, records):
    return [
        [int(s), r.hit_sigma, r.hit_tau, r.hit_rho, r.config.gamma, r.config.kappa, r.config.lam]
        for s, r in zip(seeds, records)
    ]
