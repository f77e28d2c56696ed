import math

import numpy as np
import pytest

from conftest import field
from stochpe.errors import NonFinite
from stochpe.grid import Grid, SpectralField, constraint_residual, even_residual, random_field_in_H
from stochpe.integrator import (
    BatchRunner,
    SolverConfig,
    UnstableTimestep,
    coupled_pair_integrate,
    integrate,
    make_rng,
    preflight,
    stability_bound,
    step,
)
from stochpe.noise import NoiseModel, reference_noise

PI = np.pi


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [dict(dt=0.0), dict(dt=-1e-3), dict(t_end=-1.0), dict(epsilon=0.05), dict(observer_stride=0), dict(seed=-1), dict(dt=3e-3, t_end=0.01)],
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)

    def test_steps(self):
        assert SolverConfig(dt=1e-3, t_end=1.0).n_steps == 1000
        assert SolverConfig(dt=0.1, t_end=0.3).n_steps == 3


class TestStep:
    def test_zero_is_equilibrium(self, g8):
        out = step(SpectralField.zeros(g8), SolverConfig(), None, make_rng(0))
        assert out.norm() == 0.0

    def test_linear_mode_decay(self, g16):
        v = field(g16, lambda x, y, z: (np.cos(PI * z) * np.cos(2 * PI * y), 0 * z))
        cfg = SolverConfig(dt=1e-3, nonlinear=False)
        out = step(v, cfg, None, make_rng(0))
        k2 = (2 * PI) ** 2 + PI**2
        assert np.allclose(out.data, math.exp(-k2 * 1e-3) * v.data, rtol=1e-14, atol=1e-15)

    def test_output_in_H(self, g16):
        v = random_field_in_H(g16, 1)
        out = step(v, SolverConfig(), reference_noise(g16), make_rng(3))
        assert constraint_residual(out) <= 1e-12
        assert abs(out.mean()).max() == 0.0


class TestIntegrate:
    def test_t_end_zero(self, g16):
        v = random_field_in_H(g16, 0)
        tr = integrate(v, SolverConfig(dt=1e-3, t_end=0.0), reference_noise(g16))
        assert tr.times == [0.0] and len(tr.snapshots) == 1
        assert np.array_equal(tr.snapshots[0].data, v.data)
        assert np.array_equal(tr.final.data, v.data)

    def test_deterministic(self, g16):
        cfg = SolverConfig(dt=1e-3, t_end=0.02, observer_stride=5, seed=17)
        v, model = random_field_in_H(g16, 0), reference_noise(g16)
        a, b = integrate(v, cfg, model), integrate(v, cfg, model)
        assert a.times == b.times and a.functionals == b.functionals
        assert all(np.array_equal(x.data, y.data) for x, y in zip(a.snapshots, b.snapshots))

    def test_times_increase_and_states_in_H(self, g16):
        cfg = SolverConfig(dt=1e-3, t_end=0.02, observer_stride=3, seed=1)
        tr = integrate(random_field_in_H(g16, 2), cfg, reference_noise(g16))
        assert np.all(np.diff(tr.times) > 0)
        assert tr.times[-1] == pytest.approx(0.02)
        assert all(constraint_residual(s) <= 1e-12 for s in tr.snapshots)

    def test_observers(self, g8):
        seen = []
        cfg = SolverConfig(dt=1e-3, t_end=0.01, observer_stride=4)
        integrate(random_field_in_H(g8, 0), cfg, None, observers=[lambda t, v: seen.append(t)])
        assert seen == pytest.approx([0.0, 0.004, 0.008, 0.01])

    def test_energy_dissipation(self, g16):
        cfg = SolverConfig(dt=1e-3, t_end=0.03, observer_stride=1)
        for s in range(10):
            tr = integrate(random_field_in_H(g16, s, norm=5.0), cfg, None, store_snapshots=False, observe="light")
            e = tr.energy["E2"]
            assert np.all(np.diff(e) <= 0)

    def test_mean_and_constraint_preserved(self, g16):
        cfg = SolverConfig(dt=1e-3, t_end=0.05, observer_stride=1, seed=8)
        worst = [0.0, 0.0]

        def obs(t, v):
            worst[0] = max(worst[0], constraint_residual(v))
            worst[1] = max(worst[1], abs(v.mean()).max())

        integrate(random_field_in_H(g16, 3), cfg, reference_noise(g16, gain="bounded"), observers=[obs], observe="none")
        assert worst[0] <= 1e-10 and worst[1] <= 1e-12

    def test_even_sector_closed(self, g16):
        model = reference_noise(g16, count=24)
        assert max(even_residual(m.shape) for m in model.modes) <= 1e-15
        cfg = SolverConfig(dt=1e-3, t_end=0.03, observer_stride=10, seed=2)
        tr = integrate(random_field_in_H(g16, 5, even=True), cfg, model, observe="none")
        assert max(even_residual(s) for s in tr.snapshots) <= 1e-10

    def test_deterministic_defect_shrinks_with_dt(self, g16):
        v = random_field_in_H(g16, 1, norm=4.0)
        defects = []
        for dt in (2e-3, 1e-3, 5e-4):
            tr = integrate(v, SolverConfig(dt=dt, t_end=0.02, observer_stride=1000), None, store_snapshots=False, observe="light")
            e, g = tr.energy["E2"], tr.energy["int_G"]
            defects.append(abs(e[-1] + 2 * g[-1] - e[0]))
        r1, r2 = defects[0] / defects[1], defects[1] / defects[2]
        assert 1.6 < r1 < 2.5 and 1.6 < r2 < 2.5


class TestStability:
    def test_preflight(self, g16):
        v = random_field_in_H(g16, 0, norm=1e3)
        bound = stability_bound(g16, v.data[None])
        assert bound < 1e-3
        with pytest.raises(UnstableTimestep):
            preflight(v, SolverConfig(dt=1e-3))
        with pytest.raises(UnstableTimestep):
            integrate(v, SolverConfig(dt=1e-3, t_end=0.01), None)
        assert stability_bound(g16, np.zeros((1, 2) + g16.spectral_shape)) == math.inf

    def _blowup(self, g16, mode):
        a = random_field_in_H(g16, 0, norm=1e150).data
        a0 = np.stack([a, 1e-150 * a])
        cfg = SolverConfig(dt=1e-2, t_end=0.5)
        return BatchRunner(g16, cfg, None, a0, [make_rng(0), make_rng(1)], on_nonfinite=mode, check_dt=False, observe="light")

    def test_nonfinite_raises(self, g16):
        with pytest.raises(NonFinite) as exc:
            with np.errstate(all="ignore"):
                self._blowup(g16, "raise").run()
        assert exc.value.member == 0 and math.isfinite(exc.value.time)

    def test_nonfinite_flagged(self, g16):
        r = self._blowup(g16, "flag")
        with np.errstate(all="ignore"):
            r.run()
        assert r.failed.tolist() == [True, False]
        assert math.isfinite(r.fail_time[0]) and r.fail_time[1] == math.inf
        assert np.isnan(r.obs_array("E")[-1, 0]) and np.isfinite(r.obs_array("E")[-1, 1])


class TestCoupled:
    def test_identical_starts(self, g16):
        v = random_field_in_H(g16, 0)
        cfg = SolverConfig(dt=1e-3, t_end=0.02, observer_stride=5, seed=3)
        a, b, d = coupled_pair_integrate(v, v, cfg, reference_noise(g16))
        assert np.array_equal(a.final.data, b.final.data)
        assert np.all(d["grad_diff_sq"] == 0.0)

    def test_shared_increments(self, g16):
        # each member equals its own single run with the shared seed
        v = random_field_in_H(g16, 0)
        u = random_field_in_H(g16, 1, norm=1e-3)
        cfg = SolverConfig(dt=1e-3, t_end=0.01, observer_stride=5, seed=3)
        model = reference_noise(g16)
        a, b, _ = coupled_pair_integrate(v, v + u, cfg, model)
        assert np.array_equal(a.final.data, integrate(v, cfg, model).final.data)
        assert np.array_equal(b.final.data, integrate(v + u, cfg, model).final.data)

    def test_linear_difference_ignores_amplitude(self, g16):
        v = random_field_in_H(g16, 0)
        u = random_field_in_H(g16, 1, norm=1e-3)
        cfg = SolverConfig(dt=1e-3, t_end=0.02, observer_stride=2, seed=3, nonlinear=False)
        d1 = coupled_pair_integrate(v, v + u, cfg, reference_noise(g16, total=1.0))[2]
        d2 = coupled_pair_integrate(v, v + u, cfg, reference_noise(g16, total=4.0))[2]
        assert np.allclose(d1["grad_diff_sq"], d2["grad_diff_sq"], rtol=1e-12, atol=0)


def test_batch_composition_irrelevant(g16):
    # a member's path does not depend on which other members share the batch
    cfg = SolverConfig(dt=1e-3, t_end=0.01, observer_stride=10)
    model = reference_noise(g16)
    a0 = np.stack([random_field_in_H(g16, s).data for s in range(3)])
    full = BatchRunner(g16, cfg, model, a0, [make_rng(s) for s in range(3)]).run()
    solo = BatchRunner(g16, cfg, model, a0[1:2], [make_rng(1)]).run()
    assert np.array_equal(full.a[1], solo.a[0])


def test_empty_noise_model_is_deterministic(g16):
    cfg = SolverConfig(dt=1e-3, t_end=0.01, seed=1)
    v = random_field_in_H(g16, 0)
    a = integrate(v, cfg, NoiseModel(g16))
    b = integrate(v, SolverConfig(dt=1e-3, t_end=0.01, seed=2), None)
    assert np.array_equal(a.final.data, b.final.data)
