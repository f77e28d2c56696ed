"""Monte Carlo ensembles: seeded members, expectations, energy balance and time-averaged tail profiles.

Member ``k`` draws from ``PCG64(splitmix64(base_seed + k))``.  All members
advance together in one :class:`~stochpe.integrator.BatchRunner`; since each
member only touches its own state and generator, the statistics do not
depend on batching or member order.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, EmptyEnsemble, NonFinite
from .grid import random_field_in_H
from .integrator import BatchRunner, SolverConfig, make_rng
from .persistence import checkpoint_load, checkpoint_save, config_digest
from .stopping import StoppingConfig, empirical_exceedance

MASK64 = (1 << 64) - 1


def splitmix64(x):
    """One splitmix64 output for the 64-bit input ``x``."""
    z = (int(x) + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def member_seed(base_seed, k):
    return splitmix64((int(base_seed) + int(k)) & MASK64)


@dataclass(frozen=True)
class EnsembleConfig:
    grid: object
    members: int
    base_seed: int = 0
    solver: SolverConfig = SolverConfig()
    noise: object = None
    stopping: StoppingConfig | None = StoppingConfig()
    radii: tuple = ()
    checkpoint_every: int = 0
    initial: str = "zero"
    initial_seed: int = 0
    initial_norm: float = 1.0
    initial_field: object = None
    observe: str = "full"
    keep_series: bool = False

    def __post_init__(self):
        if int(self.members) < 1:
            raise ValueError("members must be a positive integer")
        if self.initial not in ("zero", "random", "file"):
            raise ValueError(f"unknown initial kind {self.initial!r}")
        if self.initial == "file" and self.initial_field is None:
            raise ValueError("initial kind 'file' needs initial_field")
        seeds = self.seeds()
        if len(set(seeds)) != len(seeds):
            raise ValueError("member seeds collide")

    def seeds(self):
        return [member_seed(self.base_seed, k) for k in range(self.members)]

    def initial_batch(self):
        g = self.grid
        if self.initial == "zero":
            a = np.zeros((2,) + g.spectral_shape, dtype=complex)
        elif self.initial == "random":
            a = random_field_in_H(g, self.initial_seed, norm=self.initial_norm).data
        else:
            a = self.initial_field.data
        return np.broadcast_to(a, (self.members,) + a.shape).copy()

    def digest_text(self):
        """Canonical text of everything that determines the run."""
        s = self.solver
        noise = "none"
        if self.noise is not None:
            h = hashlib.sha256()
            for md in self.noise.modes:
                h.update(np.ascontiguousarray(md.shape.data).tobytes())
                h.update(repr(md.amplitude).encode())
            noise = f"{self.noise.gain}:{h.hexdigest()}"
        init = self.initial
        if self.initial == "file":
            init += ":" + hashlib.sha256(np.ascontiguousarray(self.initial_field.data).tobytes()).hexdigest()
        st = self.stopping
        return "\n".join(
            [
                f"grid={self.grid.nx},{self.grid.ny},{self.grid.nz}",
                f"members={self.members}",
                f"base_seed={self.base_seed}",
                f"dt={s.dt!r}",
                f"t_end={s.t_end!r}",
                f"dealias={s.dealias.fraction!r}",
                f"epsilon={s.epsilon!r}",
                f"stride={s.observer_stride}",
                f"nonlinear={s.nonlinear}",
                f"noise={noise}",
                f"stopping={None if st is None else (st.gamma, st.kappa, st.lam)!r}",
                f"initial={init}:{self.initial_seed}:{self.initial_norm!r}",
                f"observe={self.observe}",
                f"series={self.keep_series}",
            ]
        )


@dataclass
class EnsembleStats:
    """Ensemble summaries.  ``obs[name]`` is ``(n_obs, M)``; ``mean``/``se`` are ``(n_obs,)``."""

    times: np.ndarray
    seeds: list
    obs: dict
    mean: dict
    se: dict
    records: list
    failed: np.ndarray
    fail_time: np.ndarray
    t_end: float
    dt: float
    hs_budget: float
    series: dict = field(default_factory=dict)
    kb: dict = field(default_factory=dict)
    exceedance: dict = field(default_factory=dict)

    @property
    def members(self):
        return len(self.seeds)

    @property
    def partial(self):
        return bool(self.failed.any())


def _mean_se(x):
    """Mean and standard error over the member axis, ignoring failed (NaN) members."""
    x = np.asarray(x, dtype=float)
    ok = ~np.isnan(x)
    n = ok.sum(axis=-1)
    mean = np.where(n > 0, np.nansum(x, axis=-1) / np.maximum(n, 1), np.nan)
    dev = np.where(ok, x - mean[..., None], 0.0)
    var = np.where(n > 1, (dev * dev).sum(axis=-1) / np.maximum(n - 1, 1), np.nan)
    return mean, np.sqrt(var / np.maximum(n, 1))


def log_moments(obs):
    """Per-member logged moments from recorded observables."""
    out = {}
    if "X" in obs:
        out["phiX"] = np.log1p(obs["X"])
        out["phiX_eps"] = np.log1p(obs["X_eps"])
        out["log1pY"] = np.log1p(obs["Y"])
        out["log1pXbar"] = np.log1p(obs["Xbar"])
    return out


def stats_from_runner(runner, cfg):
    if runner.n_members == 0:
        raise EmptyEnsemble("no members")
    obs = {k: runner.obs_array(k) for k in runner.obs}
    obs.update(log_moments(obs))
    obs["energy_residual"] = obs["E2"] + 2.0 * obs["int_G"] - runner.a0_norm_sq[None, :] - obs["int_hs"]
    mean, se = {}, {}
    for k, x in obs.items():
        mean[k], se[k] = _mean_se(x)
    records = runner.tracker.records() if runner.tracker is not None else []
    stats = EnsembleStats(
        times=runner.obs_times(),
        seeds=cfg.seeds(),
        obs=obs,
        mean=mean,
        se=se,
        records=records,
        failed=runner.failed.copy(),
        fail_time=runner.fail_time.copy(),
        t_end=cfg.solver.t_end,
        dt=cfg.solver.dt,
        hs_budget=cfg.noise.hs_budget if cfg.noise is not None else 0.0,
        series=runner.series_arrays() if runner.keep_series else {},
    )
    if cfg.radii and cfg.solver.n_steps > 0:
        stats.kb = kb_profile(stats, cfg.radii)
    if records:
        good = [r for r, f in zip(records, runner.failed) if not f]
        if good:
            stats.exceedance = empirical_exceedance(good, cfg.solver.t_end)
    return stats


def _make_runner(cfg, a0=None, rngs=None):
    resumed = a0 is not None
    return BatchRunner(
        cfg.grid,
        cfg.solver,
        cfg.noise,
        cfg.initial_batch() if a0 is None else a0,
        [make_rng(s) for s in cfg.seeds()] if rngs is None else rngs,
        stopping=cfg.stopping,
        observe=cfg.observe,
        keep_series=cfg.keep_series,
        on_nonfinite="flag",
        check_dt=not resumed,
    )


def save_runner(path, runner, cfg):
    checkpoint_save(
        path,
        cfg.grid,
        runner.step,
        list(runner.a),
        runner.rngs,
        runner.aux_state(),
        config_digest(cfg.digest_text()),
    )


def load_runner(path, cfg):
    ck = checkpoint_load(path)
    if ck["digest"] != config_digest(cfg.digest_text()):
        raise CheckpointError("checkpoint was written for a different configuration")
    if len(ck["states"]) != cfg.members or ck["grid"] != cfg.grid:
        raise CheckpointError("checkpoint member count or grid does not match the configuration")
    runner = _make_runner(cfg, a0=np.stack(ck["states"]), rngs=ck["rngs"])
    runner.load_aux(ck["aux"])
    if runner.step != ck["step"]:
        raise CheckpointError("checkpoint step disagrees with its auxiliary block")
    return runner


def run_ensemble(cfg, checkpoint_path=None, resume=None, stop_at=None, raise_on_failure=False):
    """Run all members to ``t_end`` and return :class:`EnsembleStats`.

    With ``checkpoint_path`` and ``cfg.checkpoint_every > 0`` a checkpoint is
    written every that many steps.  ``resume`` is a checkpoint path to
    continue from.  ``stop_at`` pauses after that step (writing a checkpoint
    if a path is given) and returns ``None``.
    """
    runner = load_runner(resume, cfg) if resume else _make_runner(cfg)
    every = int(cfg.checkpoint_every)
    targets = []
    if checkpoint_path and every > 0:
        targets = list(range(every, cfg.solver.n_steps, every))
    for target in targets:
        if target <= runner.step:
            continue
        if stop_at is not None and target > stop_at:
            break
        runner.run(stop_at=target)
        save_runner(checkpoint_path, runner, cfg)
    if stop_at is not None and stop_at < cfg.solver.n_steps:
        runner.run(stop_at=stop_at)
        if checkpoint_path:
            save_runner(checkpoint_path, runner, cfg)
        return None
    runner.run()
    if raise_on_failure and runner.failed.any():
        i = int(np.flatnonzero(runner.failed)[0])
        raise NonFinite(f"member {i} produced non-finite values", time=float(runner.fail_time[i]), member=i)
    return stats_from_runner(runner, cfg)


# reports ------------------------------------------------------------------


def energy_balance_report(stats):
    """Energy residual ``E|v(t)|^2 + 2 E int |grad v|^2 - E|v0|^2 - int E sum|sigma_k|^2`` with its SE."""
    return {
        "t": stats.times,
        "residual": stats.mean["energy_residual"],
        "se": stats.se["energy_residual"],
    }


def extrapolated_residual(coarse, fine):
    """Richardson combination ``2 R(dt/2) - R(dt)`` at the final time with independent-sample SE."""
    r1 = coarse.mean["energy_residual"][-1]
    r2 = fine.mean["energy_residual"][-1]
    s1 = coarse.se["energy_residual"][-1]
    s2 = fine.se["energy_residual"][-1]
    return 2.0 * r2 - r1, math.sqrt(4.0 * s2 * s2 + s1 * s1)


def kb_profile(stats, radii, T=None):
    """Time-fraction tail profile ``mu_T(B_R^c)`` per radius, with SE over members.

    Uses observer samples at times ``t < T`` (left Riemann sum), the H^2 norm
    ``sqrt(E^2 + Ebar^2 + Lbar^2)``, and excludes failed members.
    """
    T = stats.t_end if T is None else T
    sel = stats.times < T - 1e-12 * max(1.0, T)
    if not sel.any():
        raise EmptyEnsemble("no observer samples before T")
    norms = np.sqrt(stats.obs["h2"][sel])[:, ~stats.failed]
    if norms.shape[1] == 0:
        raise EmptyEnsemble("all members failed")
    radii = np.asarray(radii, dtype=float)
    frac = (norms[None, :, :] >= radii[:, None, None]).mean(axis=1)
    mu, se = _mean_se(frac)
    return {"R": radii, "mu": mu, "se": se, "T": T}


def time_average(stats, name, T):
    """``(1/T) int_0^T E[name] dt`` by the left Riemann sum over observer samples."""
    sel = stats.times < T - 1e-12 * max(1.0, T)
    if not sel.any():
        raise EmptyEnsemble("no observer samples before T")
    return float(np.mean(stats.mean[name][sel]))


def martingale_mean(stats):
    """Mean and SE of the discrete stochastic integral ``sum <sigma(v_n) dW_n, v_n>`` at the final time."""
    return float(stats.mean["martingale"][-1]), float(stats.se["martingale"][-1])
