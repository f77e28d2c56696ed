"""Exponential Euler-Maruyama time stepping with per-step projection onto H.

One step maps ``v_n`` to

    v_{n+1} = S(dt) [v_n - dt P_H N(v_n) + sigma(v_n) dW_n],   S(dt) = exp(dt Lap),

followed by projection and truncation.  :class:`BatchRunner` advances many
members at once; every member draws from its own generator so results do
not depend on how members are batched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import NonFinite, StochPEError
from .functionals import EPS_MAX, StateFunctionals, batch_functionals, fractional_symbol
from .grid import SpectralField, _leray, check_grid, check_in_H
from .noise import _noise_field
from .spectral_ops import DealiasRule, _nonlinear
from .stopping import StoppingTracker, stopping_quantities

OBSERVE_MODES = ("full", "light", "none")


class UnstableTimestep(StochPEError):
    """The time step exceeds the advective pre-flight bound."""


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1e-3
    t_end: float = 1.0
    dealias: DealiasRule = DealiasRule()
    epsilon: float = 0.0
    observer_stride: int = 10
    seed: int = 0
    nonlinear: bool = True

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive and finite")
        if not (self.t_end >= 0 and math.isfinite(self.t_end)):
            raise ValueError("t_end must be nonnegative and finite")
        if not 0.0 <= self.epsilon <= EPS_MAX + 1e-15:
            raise ValueError(f"epsilon must lie in [0, 1/42], got {self.epsilon}")
        if int(self.observer_stride) != self.observer_stride or self.observer_stride < 1:
            raise ValueError("observer_stride must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        n = self.t_end / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError(f"t_end={self.t_end} is not a whole number of steps of dt={self.dt}")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))

    def time(self, n):
        return n * self.dt


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(int(seed)))


def max_speed(grid, a):
    """Largest pointwise ``|v|`` over the batch."""
    phys = grid.to_physical(a)
    return float(np.sqrt((phys * phys).sum(axis=-4)).max()) if phys.size else 0.0


def stability_bound(grid, a):
    """Advective bound ``0.5 * dx / max|v|`` (``inf`` for the zero state)."""
    vmax = max_speed(grid, a)
    dx = min(grid.lx / grid.nx, grid.ly / grid.ny, grid.lz / grid.nz)
    return math.inf if vmax == 0.0 else 0.5 * dx / vmax


def preflight(v0, cfg):
    """Raise :class:`UnstableTimestep` if ``cfg.dt`` exceeds the bound at ``v0``; return the bound."""
    a = v0.data if isinstance(v0, SpectralField) else v0
    grid = v0.grid if isinstance(v0, SpectralField) else None
    bound = stability_bound(grid, a)
    if cfg.dt > bound:
        raise UnstableTimestep(f"dt={cfg.dt} exceeds the advective bound {bound:.3e}")
    return bound


def _advance(grid, a, cfg, model, dw, mask, decay):
    """One step for a batch ``a`` of shape ``(B, 2, ...)``; returns ``(a_next, noise)``."""
    nl = _leray(grid, _nonlinear(grid, a, mask)) if cfg.nonlinear else None
    noise = None
    if model is not None and model.n_modes:
        gains = model.gain_factor(grid.norm_sq(a))
        noise = _noise_field(model, dw, gains)
    nxt = _kernels.etd_update(a, nl, noise, decay, cfg.dt)
    return _leray(grid, nxt) * mask, noise


def step(v, cfg, model, rng):
    """Advance a single state by one step, drawing the increment from ``rng``."""
    check_in_H(v)
    g = v.grid
    mask = cfg.dealias.mask(g)
    decay = np.exp(-g.k2 * cfg.dt)
    k = model.n_modes if model is not None else 0
    dw = (rng.standard_normal(k) * math.sqrt(cfg.dt)).reshape(1, k)
    nxt, _ = _advance(g, v.data[None], cfg, model, dw, mask, decay)
    if not np.isfinite(nxt).all():
        raise NonFinite("non-finite coefficients after one step", time=0.0, member=0)
    return SpectralField(g, nxt[0])


def _light_observables(grid, a, eps):
    k = np.sqrt(grid.k2)
    E2 = grid.norm_sq(a)
    G = grid.norm_sq(a * k)
    D = grid.norm_sq(a * grid.k2)
    Le = grid.norm_sq(a * k * fractional_symbol(grid, eps))
    return {"E": np.sqrt(E2), "Ebar": np.sqrt(G), "L": np.sqrt(G), "Lbar": np.sqrt(D), "L_eps": np.sqrt(Le)}


class BatchRunner:
    """Advance ``B`` members from ``a0`` with generators ``rngs``.

    ``rng_index[i]`` selects the generator driving member ``i``; members
    sharing an index receive identical increments (coupled runs).  The
    state between steps is "pending time ``step``": ``a`` holds
    ``v(step * dt)`` and nothing at that time has been recorded yet.
    """

    def __init__(
        self,
        grid,
        cfg,
        model,
        a0,
        rngs,
        rng_index=None,
        stopping=None,
        observe="full",
        store_snapshots=False,
        keep_series=False,
        on_nonfinite="raise",
        callbacks=(),
        check_dt=True,
    ):
        if observe not in OBSERVE_MODES:
            raise ValueError(f"observe must be one of {OBSERVE_MODES}")
        if on_nonfinite not in ("raise", "flag"):
            raise ValueError("on_nonfinite must be 'raise' or 'flag'")
        a0 = np.array(a0, dtype=complex)
        if a0.ndim != 5 or a0.shape[1:] != (2,) + grid.spectral_shape:
            raise ValueError(f"initial batch has shape {a0.shape}")
        self.grid, self.cfg, self.model = grid, cfg, model
        self.rngs = list(rngs)
        b = a0.shape[0]
        self.rng_index = np.arange(b) if rng_index is None else np.asarray(rng_index)
        if self.rng_index.shape != (b,) or self.rng_index.max(initial=-1) >= len(self.rngs):
            raise ValueError("rng_index must map every member to a generator")
        self.mask = cfg.dealias.mask(grid)
        self.decay = np.exp(-grid.k2 * cfg.dt)
        # per-step dissipation weight: int_0^dt |k|^2 exp(-2|k|^2 s) ds / dt, which tends to |k|^2
        self.dissipation = np.sqrt(-np.expm1(-2.0 * grid.k2 * cfg.dt) / (2.0 * cfg.dt))
        self.observe = observe
        self.store_snapshots = store_snapshots
        self.keep_series = keep_series
        self.on_nonfinite = on_nonfinite
        self.callbacks = list(callbacks)
        self.n_modes = model.n_modes if model is not None else 0

        if check_dt and b:
            bound = stability_bound(grid, a0)
            if cfg.dt > bound:
                raise UnstableTimestep(f"dt={cfg.dt} exceeds the advective bound {bound:.3e}")
        self.a = a0 * self.mask
        self.a0_norm_sq = grid.norm_sq(self.a)
        self.step = 0
        self.done = False
        self.tracker = StoppingTracker(stopping, b) if stopping is not None else None
        self.int_G = np.zeros(b)
        self.int_hs = np.zeros(b)
        self.martingale = np.zeros(b)
        self.failed = np.zeros(b, bool)
        self.fail_time = np.full(b, math.inf)
        self.obs_steps = []
        self.obs = {}
        self.snapshots = []
        self.series = {k: [] for k in ("t", "l6_4", "sig", "tau", "h2")}

    @property
    def n_members(self):
        return self.a.shape[0]

    # ------------------------------------------------------------------

    def _record(self, n, t, q):
        a = self.a
        if self.observe == "full":
            vals = batch_functionals(self.grid, a, self.cfg.epsilon)
        elif self.observe == "light":
            vals = _light_observables(self.grid, a, self.cfg.epsilon)
        else:
            vals = {}
        vals = dict(vals)
        vals["E2"] = q["E2"]
        vals["int_G"] = self.int_G.copy()
        vals["int_hs"] = self.int_hs.copy()
        vals["martingale"] = self.martingale.copy()
        if self.tracker is not None:
            vals["int_tau_before"] = self.tracker.int_tau_lag.copy()
        if "h2" in q:
            vals["h2"] = q["h2"]
        else:
            vals["h2"] = q["E2"] + q["G"] + self.grid.norm_sq(a * self.grid.k2)
        for k, x in vals.items():
            x = np.where(self.failed, np.nan, x)
            self.obs.setdefault(k, []).append(x)
        self.obs_steps.append(n)
        if self.store_snapshots:
            self.snapshots.append(a.copy())
        for cb in self.callbacks:
            cb(n, t, a)

    def _quantities(self):
        g = self.grid
        if self.tracker is not None:
            return stopping_quantities(g, self.a)
        k = np.sqrt(g.k2)
        return {"E2": g.norm_sq(self.a), "G": g.norm_sq(self.a * k)}

    def _draw(self):
        sq = math.sqrt(self.cfg.dt)
        draws = np.stack([r.standard_normal(self.n_modes) * sq for r in self.rngs]) if self.rngs else None
        if draws is None:
            return np.zeros((self.n_members, self.n_modes))
        return draws[self.rng_index]

    def run(self, stop_at=None):
        """Process times ``step .. n_steps``; with ``stop_at`` pause once ``step == stop_at``."""
        cfg, g = self.cfg, self.grid
        n_steps = cfg.n_steps
        stride = cfg.observer_stride
        active = ~self.failed
        while not self.done:
            if stop_at is not None and self.step >= stop_at:
                return self
            n = self.step
            t = cfg.time(n)
            q = self._quantities()
            active = ~self.failed
            if n % stride == 0 or n == n_steps:
                self._record(n, t, q)
            if self.tracker is not None:
                self.tracker.update(t, q, cfg.dt, active)
                if self.keep_series:
                    self.series["t"].append(t)
                    for k in ("l6_4", "sig", "tau", "h2"):
                        self.series[k].append(np.where(active, q[k], np.nan))
            if n == n_steps:
                self.done = True
                break
            dw = self._draw()
            nxt, noise = _advance(g, self.a, cfg, self.model, dw, self.mask, self.decay)
            G = g.norm_sq(self.a * self.dissipation)
            hs = np.zeros(self.n_members)
            if noise is not None:
                gains = self.model.gain_factor(q["E2"])
                hs = gains * gains * self.model.hs_budget
                mart = g.inner(self.a, noise)
            else:
                mart = np.zeros(self.n_members)
            ok = np.isfinite(nxt).reshape(self.n_members, -1).all(axis=1)
            bad = ~ok & active
            if bad.any():
                i = int(np.flatnonzero(bad)[0])
                if self.on_nonfinite == "raise":
                    bound = stability_bound(g, self.a[i : i + 1])
                    raise NonFinite(
                        f"member {i}: non-finite state after t={t:.6g} "
                        f"(advective bound at last finite state {bound:.3e}, dt={cfg.dt})",
                        time=t,
                        member=i,
                    )
                self.failed |= bad
                self.fail_time = np.where(bad, t, self.fail_time)
            keep = ~self.failed
            self.int_G = np.where(keep, self.int_G + G * cfg.dt, self.int_G)
            self.int_hs = np.where(keep, self.int_hs + hs * cfg.dt, self.int_hs)
            self.martingale = np.where(keep, self.martingale + mart, self.martingale)
            self.a = np.where(keep[:, None, None, None, None], nxt, self.a)
            self.step = n + 1
        return self

    # results ----------------------------------------------------------

    def obs_times(self):
        return np.array([self.cfg.time(n) for n in self.obs_steps])

    def obs_array(self, name):
        """``(n_obs, B)`` array of a recorded observable."""
        return np.array(self.obs[name])

    def series_arrays(self):
        out = {"t": np.array(self.series["t"])}
        for k in ("l6_4", "sig", "tau", "h2"):
            out[k] = np.array(self.series[k]).T if self.series[k] else np.zeros((self.n_members, 0))
        return out

    # persistence ------------------------------------------------------

    def aux_state(self):
        d = {
            "step": np.array(self.step),
            "done": np.array(self.done),
            "int_G": self.int_G,
            "int_hs": self.int_hs,
            "martingale": self.martingale,
            "failed": self.failed,
            "fail_time": self.fail_time,
            "a0_norm_sq": self.a0_norm_sq,
            "obs_steps": np.array(self.obs_steps, dtype=np.int64),
            "obs_names": np.array(sorted(self.obs)),
        }
        for k, x in self.obs.items():
            d[f"obs_{k}"] = np.array(x)
        if self.store_snapshots:
            d["snapshots"] = np.array(self.snapshots)
        if self.keep_series:
            for k, x in self.series.items():
                d[f"series_{k}"] = np.array(x)
        if self.tracker is not None:
            d.update(self.tracker.state_arrays())
        return d

    def load_aux(self, d):
        self.step = int(d["step"])
        self.done = bool(d["done"])
        for k in ("int_G", "int_hs", "martingale", "fail_time", "a0_norm_sq"):
            setattr(self, k, np.array(d[k], dtype=float))
        self.failed = np.array(d["failed"], dtype=bool)
        self.obs_steps = [int(s) for s in d["obs_steps"]]
        self.obs = {str(k): [np.array(r) for r in d[f"obs_{k}"]] for k in d["obs_names"]}
        if self.store_snapshots and "snapshots" in d:
            self.snapshots = [np.array(s) for s in d["snapshots"]]
        if self.keep_series:
            for k in self.series:
                if f"series_{k}" in d:
                    self.series[k] = [x for x in np.array(d[f"series_{k}"])]
        if self.tracker is not None:
            self.tracker.load_arrays(d)


# single trajectories --------------------------------------------------


@dataclass
class Trajectory:
    times: list
    functionals: list
    snapshots: list
    final: SpectralField
    stopping: object = None
    eps: float = 0.0
    energy: dict = field(default_factory=dict)
    failure_time: float = math.inf


def _functionals_at(runner, j, i):
    names = [f for f in StateFunctionals.__dataclass_fields__ if f != "eps"]
    return StateFunctionals(eps=runner.cfg.epsilon, **{k: float(runner.obs[k][j][i]) for k in names})


def _trajectory(runner, i):
    g = runner.grid
    fs = []
    if runner.observe == "full":
        fs = [_functionals_at(runner, j, i) for j in range(len(runner.obs_steps))]
    snaps = [SpectralField(g, s[i]) for s in runner.snapshots]
    rec = runner.tracker.records()[i] if runner.tracker is not None else None
    energy = {
        "E2": runner.obs_array("E2")[:, i],
        "int_G": runner.obs_array("int_G")[:, i],
        "int_hs": runner.obs_array("int_hs")[:, i],
        "martingale": runner.obs_array("martingale")[:, i],
    }
    return Trajectory(
        times=[float(t) for t in runner.obs_times()],
        functionals=fs,
        snapshots=snaps,
        final=SpectralField(g, runner.a[i]),
        stopping=rec,
        eps=runner.cfg.epsilon,
        energy=energy,
        failure_time=float(runner.fail_time[i]),
    )


def integrate(v0, cfg, model, observers=(), stopping=None, store_snapshots=True, observe="full"):
    """Run one trajectory from ``v0`` with generator seeded by ``cfg.seed``.

    ``observers`` are called as ``f(t, v)`` every ``cfg.observer_stride`` steps.
    """
    check_in_H(v0)
    g = v0.grid
    if model is not None:
        check_grid(v0, *[md.shape for md in model.modes])
    cbs = [lambda n, t, a, f=f: f(t, SpectralField(g, a[0])) for f in observers]
    runner = BatchRunner(
        g,
        cfg,
        model,
        v0.data[None],
        [make_rng(cfg.seed)],
        stopping=stopping,
        observe=observe,
        store_snapshots=store_snapshots,
        callbacks=cbs,
    )
    runner.run()
    return _trajectory(runner, 0)


def coupled_pair_integrate(v0a, v0b, cfg, model, stopping=None, observe="light"):
    """Integrate two initial states driven by one shared increment stream.

    Returns ``(traj_a, traj_b, diff)`` with ``diff = {"t", "grad_diff_sq"}``
    sampled at the observer times.
    """
    check_in_H(v0a)
    check_in_H(v0b)
    check_grid(v0a, v0b)
    g = v0a.grid
    snaps = []
    runner = BatchRunner(
        g,
        cfg,
        model,
        np.stack([v0a.data, v0b.data]),
        [make_rng(cfg.seed)],
        rng_index=np.array([0, 0]),
        stopping=stopping,
        observe=observe,
        callbacks=[lambda n, t, a: snaps.append(g.norm_sq((a[0] - a[1]) * np.sqrt(g.k2)))],
    )
    runner.run()
    diff = {"t": runner.obs_times(), "grad_diff_sq": np.array(snaps, dtype=float)}
    return _trajectory(runner, 0), _trajectory(runner, 1), diff
