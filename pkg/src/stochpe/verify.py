"""Invariant suites run by ``stochpe verify``.

Each check yields a :class:`Check`; a suite passes when all its checks do.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .functionals import check_vorticity_interpolation, compute_functionals, interpolation_ratios
from .grid import (
    SpectralField,
    compute_w,
    constraint_residual,
    even_residual,
    leray_project,
    random_field_in_H,
)
from .noise import apply_sigma, check_admissibility, sample_increment
from .spectral_ops import (
    DealiasRule,
    nonlinear_term,
    pressure_gradient,
    vorticity_rhs,
    vorticity_transport,
)

SUITES = ("structure", "noise", "inequalities", "balance")


@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    value: float = math.nan

    def line(self):
        flag = "pass" if self.ok else "fail"
        if math.isnan(self.value):
            return f"{self.name}={flag}"
        return f"{self.name}={flag} value={self.value:.6e}"


def _rel(x, scale):
    return abs(x) / scale if scale > 0 else abs(x)


def _random_unconstrained(grid, seed):
    """Real random field with nonzero mean and a barotropic gradient part."""
    rng = np.random.default_rng(seed)
    return SpectralField.from_physical(grid, rng.standard_normal((2,) + grid.shape))


def structure_suite(grid, rule=DealiasRule(), seeds=range(5)):
    worst = {k: 0.0 for k in ("nv", "pv", "idem", "adj", "constraint", "forms", "vort", "transport", "w_odd")}
    for s in seeds:
        v = random_field_in_H(grid, s)
        u = _random_unconstrained(grid, 1000 + s)
        n = nonlinear_term(v, rule)
        worst["nv"] = max(worst["nv"], _rel(v.inner(n), n.norm() * v.norm()))
        p = pressure_gradient(v, rule)
        if p.norm() > 0:
            worst["pv"] = max(worst["pv"], _rel(v.inner(p), p.norm() * v.norm()))
        pa = pressure_gradient(v, rule, form="advective")
        worst["forms"] = max(worst["forms"], _rel((p - pa).norm(), max(p.norm(), 1e-300)))
        pu = leray_project(u)
        worst["idem"] = max(worst["idem"], _rel((leray_project(pu) - pu).norm(), u.norm()))
        w2 = _random_unconstrained(grid, 2000 + s)
        worst["adj"] = max(worst["adj"], _rel(pu.inner(w2) - u.inner(leray_project(w2)), u.norm() * w2.norm()))
        worst["constraint"] = max(worst["constraint"], constraint_residual(pu))
        vr = vorticity_rhs(v, rule)
        ref = SpectralField(grid, 1j * grid.kz_d * (-n.data - grid.k2 * v.data))
        worst["vort"] = max(worst["vort"], _rel((vr - ref).norm(), ref.norm()))
        th = SpectralField(grid, 1j * grid.kz_d * v.data)
        tr = vorticity_transport(v, rule)
        worst["transport"] = max(worst["transport"], _rel(th.inner(tr), th.norm() * tr.norm()))
        ve = random_field_in_H(grid, 3000 + s, even=True)
        w = compute_w(ve)
        odd = SpectralField(grid, w.data + w.data[..., (-np.arange(grid.nz)) % grid.nz])
        worst["w_odd"] = max(worst["w_odd"], _rel(odd.norm(), w.norm()))
    tol = {"nv": 1e-10, "pv": 1e-10, "idem": 1e-12, "adj": 1e-12, "constraint": 1e-12,
           "forms": 1e-9, "vort": 1e-9, "transport": 1e-10, "w_odd": 1e-12}
    names = {
        "nv": "structure.nonlinear_cancellation",
        "pv": "structure.pressure_cancellation",
        "forms": "structure.pressure_source_forms",
        "idem": "structure.projection_idempotent",
        "adj": "structure.projection_self_adjoint",
        "constraint": "structure.projection_constraint",
        "vort": "structure.vorticity_chain_rule",
        "transport": "structure.vorticity_transport_cancellation",
        "w_odd": "structure.w_odd_for_even_v",
    }
    return [Check(names[k], worst[k] <= tol[k], worst[k]) for k in names]


def noise_suite(model, seed=0):
    g = model.grid
    rep = check_admissibility(model)
    checks = [
        Check("noise.constraint", rep.constraint_ok, rep.worst_constraint),
        Check("noise.mean", rep.mean_ok),
        Check("noise.bounds", rep.bounds_ok),
        Check("noise.C_sigma", math.isfinite(rep.C_sigma), rep.C_sigma),
        Check("noise.C_L14", math.isfinite(rep.C_L14), rep.C_L14),
        Check("noise.C_W1z6", math.isfinite(rep.C_W1z6), rep.C_W1z6),
    ]
    rng = np.random.default_rng(seed)
    v = random_field_in_H(g, seed)
    out = apply_sigma(model, v, sample_increment(model, 1e-3, rng))
    r = constraint_residual(out)
    checks.append(Check("noise.apply_sigma_in_H", r <= 1e-12, r))
    ev = max((even_residual(md.shape) for md in model.modes), default=0.0)
    checks.append(Check("noise.shapes_even", ev <= 1e-12, ev))
    return checks


def inequality_suite(grid, n_fields=10, seed=0):
    checks = []
    for p in (4, 6, 8):
        worst = max(
            check_vorticity_interpolation(random_field_in_H(grid, seed + s, spectrum_decay=1.0 + 0.25 * (s % 5)), p)[2]
            for s in range(n_fields)
        )
        checks.append(Check(f"inequalities.vorticity_interpolation_p{p}", worst <= 1 + 1e-8, worst))
    rj = rk = 0.0
    poinc = 0.0
    mono = True
    for s in range(n_fields):
        v = random_field_in_H(grid, seed + 500 + s)
        a, b = interpolation_ratios(v)
        rj, rk = max(rj, a), max(rk, b)
        f0 = compute_functionals(v, 0.0)
        f1 = compute_functionals(v, 1.0 / 42.0)
        poinc = max(poinc, f0.E * math.sqrt(grid.lambda1) / f0.Ebar)
        mono &= f0.L_eps <= f1.L_eps and f0.Lbar <= f1.Lbar_eps
    checks.append(Check("inequalities.J_ratio_finite", math.isfinite(rj), rj))
    checks.append(Check("inequalities.K_ratio_finite", math.isfinite(rk), rk))
    checks.append(Check("inequalities.poincare", poinc <= 1 + 1e-12, poinc))
    checks.append(Check("inequalities.eps_monotone", bool(mono)))
    return checks


def balance_suite(grid, model, dt=1e-3, steps=50, members=16, seed=0):
    from .ensemble import EnsembleConfig, run_ensemble
    from .integrator import SolverConfig, integrate

    cfg = SolverConfig(dt=dt, t_end=steps * dt, observer_stride=1, seed=seed)
    tr = integrate(random_field_in_H(grid, seed), cfg, None, store_snapshots=False, observe="light")
    e = np.asarray(tr.energy["E2"])
    mono = bool(np.all(np.diff(e) <= 0))
    resid = float(e[-1] + 2 * tr.energy["int_G"][-1] - e[0])
    checks = [
        Check("balance.dissipation_monotone", mono),
        Check("balance.deterministic_defect", abs(resid) <= 10 * dt * e[0], resid),
    ]
    if model.n_modes:
        ecfg = EnsembleConfig(
            grid, members, base_seed=seed, solver=cfg, noise=model, stopping=None, observe="light"
        )
        st = run_ensemble(ecfg)
        r, se = st.mean["energy_residual"][-1], st.se["energy_residual"][-1]
        m, mse = st.mean["martingale"][-1], st.se["martingale"][-1]
        bias = 10 * dt * model.hs_budget * steps * dt + 10 * dt
        checks.append(Check("balance.energy_residual", abs(r) <= 4 * se + bias, r))
        checks.append(Check("balance.martingale_mean_zero", abs(m) <= 4 * mse, m))
    return checks


def run_suites(names, grid, model, rule=DealiasRule()):
    out = []
    for name in names:
        if name == "structure":
            out += structure_suite(grid, rule)
        elif name == "noise":
            out += noise_suite(model)
        elif name == "inequalities":
            out += inequality_suite(grid)
        elif name == "balance":
            out += balance_suite(grid, model)
        else:
            raise ValueError(f"unknown suite {name!r}")
    return out
