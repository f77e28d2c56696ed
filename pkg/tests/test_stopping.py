import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochpe.errors import EmptyEnsemble
from stochpe.grid import SpectralField, random_field_in_H
from stochpe.integrator import BatchRunner, SolverConfig, integrate, make_rng
from stochpe.noise import reference_noise
from stochpe.stopping import (
    StoppingConfig,
    StoppingRecord,
    StoppingTracker,
    empirical_exceedance,
    exceedance_from_hits,
    hit_times,
    recompute_offline,
    stopping_quantities,
    stopping_rows,
    update,
)

INF = math.inf


def q(l6=0.0, sig=0.0, tau=0.0, h2=0.0):
    return {"l6_4": l6, "sig": sig, "tau": tau, "h2": h2}


class TestUpdate:
    def test_zero_trajectory_never_hits(self):
        rec = StoppingRecord(StoppingConfig(0.0, 0.0, 0.0))
        for n in range(10):
            rec = update(rec, n * 0.1, q(), 0.1)
        assert (rec.hit_sigma, rec.hit_tau, rec.hit_rho) == (INF, INF, INF)

    def test_zero_thresholds(self):
        # sigma and rho hit at the first nonzero state, tau once its integral is positive
        rec = StoppingRecord(StoppingConfig(0.0, 0.0, 0.0))
        rec = update(rec, 0.0, q(), 0.1)
        rec = update(rec, 0.1, q(1.0, 1.0, 1.0, 1.0), 0.1)
        assert rec.hit_sigma == 0.1 and rec.hit_rho == 0.1 and rec.hit_tau == INF
        rec = update(rec, 0.2, q(1.0, 1.0, 1.0, 1.0), 0.1)
        assert rec.hit_tau == 0.2

    def test_left_endpoint_rule(self):
        rec = StoppingRecord(StoppingConfig(100.0, 1.5, 100.0))
        for n in range(5):
            rec = update(rec, n * 1.0, q(tau=1.0), 1.0)
        # integral over [0, t_n) is n; first exceeds 1.5 at t = 2
        assert rec.hit_tau == 2.0
        assert rec.running_int_tau == 5.0

    def test_rho_uses_t_times_h2(self):
        rec = StoppingRecord(StoppingConfig(INF, INF, 2.0))
        rec = update(rec, 0.0, q(h2=100.0), 0.5)
        rec = update(rec, 0.5, q(h2=3.0), 0.5)
        assert rec.hit_rho == INF
        rec = update(rec, 1.0, q(h2=2.0), 0.5)
        assert rec.hit_rho == 1.0 and rec.sup_t_H2 == 2.0

    def test_nonnegative_thresholds(self):
        with pytest.raises(ValueError):
            StoppingConfig(kappa=-1.0)

    def test_gamma_warning(self):
        with pytest.warns(UserWarning):
            StoppingConfig(gamma=1.0).check_gamma(0.5)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10), st.floats(0, 10)), min_size=1, max_size=30))
    def test_monotone_and_nested(self, rows):
        series = {
            "t": 0.1 * np.arange(len(rows)),
            "l6_4": np.array([r[0] for r in rows]),
            "sig": np.array([r[1] for r in rows]),
            "tau": np.array([r[2] for r in rows]),
            "h2": np.array([r[3] for r in rows]),
        }
        th = [0.0, 0.5, 1.0, 2.0, 5.0, 20.0]
        hits = hit_times(series, 0.1, th, th, th)
        for kind in ("sigma", "tau", "rho"):
            h = [hits[kind][x][0] for x in th]
            assert all(a <= b for a, b in zip(h, h[1:]))
        # online replay gives identical hit times and non-decreasing running statistics
        prev = StoppingRecord(StoppingConfig(2.0, 2.0, 2.0))
        for n, t in enumerate(series["t"]):
            cur = update(prev, float(t), {k: series[k][n] for k in ("l6_4", "sig", "tau", "h2")}, 0.1)
            assert cur.running_int_tau >= prev.running_int_tau
            assert cur.running_int_sigma >= prev.running_int_sigma
            assert cur.running_sup_L6_4 >= prev.running_sup_L6_4
            prev = cur
        assert prev.hit_sigma == hits["sigma"][2.0][0]
        assert prev.hit_tau == hits["tau"][2.0][0]
        assert prev.hit_rho == hits["rho"][2.0][0]


class TestTracker:
    def test_matches_scalar_update(self):
        rng = np.random.default_rng(0)
        cfg = StoppingConfig(3.0, 2.0, 1.0)
        tr = StoppingTracker(cfg, 4)
        recs = [StoppingRecord(cfg) for _ in range(4)]
        for n in range(20):
            vals = {k: rng.uniform(0, 1, 4) for k in ("l6_4", "sig", "tau", "h2")}
            tr.update(n * 0.05, vals, 0.05)
            recs = [update(r, n * 0.05, {k: vals[k][i] for k in vals}, 0.05) for i, r in enumerate(recs)]
        assert tr.records() == recs

    def test_state_round_trip(self):
        tr = StoppingTracker(StoppingConfig(), 2)
        tr.update(0.0, {k: np.ones(2) for k in ("l6_4", "sig", "tau", "h2")}, 0.1)
        other = StoppingTracker(StoppingConfig(), 2)
        other.load_arrays(tr.state_arrays())
        assert other.records() == tr.records()


class TestOnline:
    def test_online_equals_offline(self, g16):
        cfg = SolverConfig(dt=1e-3, t_end=0.05, observer_stride=10, seed=2)
        stop = StoppingConfig(0.05, 0.5, 0.01)
        model = reference_noise(g16, total=4.0)
        runner = BatchRunner(
            g16, cfg, model, np.zeros((2, 2) + g16.spectral_shape, complex), [make_rng(1), make_rng(2)],
            stopping=stop, observe="none", keep_series=True,
        )
        runner.run()
        s = runner.series_arrays()
        recs = runner.tracker.records()
        assert any(r.hit_sigma < INF for r in recs)
        for i, r in enumerate(recs):
            off = recompute_offline({"t": s["t"], **{k: s[k][i] for k in ("l6_4", "sig", "tau", "h2")}}, stop, cfg.dt)
            assert off == r

    def test_doubling_kappa(self, g16):
        v0 = random_field_in_H(g16, 0, norm=3.0)
        cfg = SolverConfig(dt=1e-3, t_end=0.05, observer_stride=50, seed=5)
        model = reference_noise(g16)
        hits = []
        for kappa in (0.5, 1.0, 2.0, 4.0):
            tr = integrate(v0, cfg, model, stopping=StoppingConfig(10.0, kappa, 10.0), store_snapshots=False, observe="none")
            hits.append(tr.stopping.hit_tau)
        assert hits[0] < INF
        assert all(a <= b for a, b in zip(hits, hits[1:]))

    def test_zero_state_never_hits(self, g8):
        tr = integrate(SpectralField.zeros(g8), SolverConfig(dt=1e-3, t_end=0.01), None, stopping=StoppingConfig(0, 0, 0))
        r = tr.stopping
        assert (r.hit_sigma, r.hit_tau, r.hit_rho) == (INF, INF, INF)

    def test_quantities_h2(self, g16):
        v = random_field_in_H(g16, 1)
        qq = stopping_quantities(g16, v.data[None])
        from stochpe.functionals import compute_functionals

        f = compute_functionals(v)
        assert qq["h2"][0] == pytest.approx(f.H2_sq, rel=1e-12)
        # Y = ||v||_6^6 + ||dz v||^2
        l6_6 = f.Y - g16.norm_sq(1j * g16.kz_d * v.data)
        assert qq["l6_4"][0] == pytest.approx(l6_6 ** (2 / 3), rel=1e-10)


class TestExceedance:
    def _rec(self, s, t, r):
        return StoppingRecord(StoppingConfig(), hit_sigma=s, hit_tau=t, hit_rho=r)

    def test_never_hit(self):
        ex = empirical_exceedance([self._rec(INF, INF, INF)] * 5, 1.0)
        assert all(ex[k].p == 0.0 for k in ex)
        assert ex["tau"].lo == 0.0 and 0 < ex["tau"].hi < 1

    def test_all_hit(self):
        ex = empirical_exceedance([self._rec(0.0, 0.0, 0.0)] * 5, 1.0)
        assert all(ex[k].p == 1.0 for k in ex)

    def test_sigma_inclusive_tau_strict(self):
        ex = empirical_exceedance([self._rec(1.0, 1.0, 1.0)], 1.0)
        assert ex["sigma"].p == 1.0 and ex["tau"].p == 0.0 and ex["rho"].p == 0.0

    def test_wilson_interval(self):
        ex = exceedance_from_hits([0.1] * 3 + [INF] * 7, 1.0)
        # closed-form Wilson score interval for 3 / 10
        z, n, p = 1.959963984540054, 10, 0.3
        mid = (p + z * z / (2 * n)) / (1 + z * z / n)
        half = z / (1 + z * z / n) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
        assert ex.p == 0.3
        assert ex.lo == pytest.approx(mid - half, rel=1e-9)
        assert ex.hi == pytest.approx(mid + half, rel=1e-9)

    def test_empty(self):
        with pytest.raises(EmptyEnsemble):
            empirical_exceedance([], 1.0)
        with pytest.raises(EmptyEnsemble):
            exceedance_from_hits([], 1.0)

    def test_monotone_in_kappa(self):
        hits = {1.0: np.array([0.1, 0.2, INF]), 2.0: np.array([0.3, INF, INF])}
        assert exceedance_from_hits(hits[1.0], 1.0).p >= exceedance_from_hits(hits[2.0], 1.0).p

    def test_rows(self):
        rows = stopping_rows([7], [self._rec(0.5, INF, 0.25)])
        assert rows == [[7, 0.5, INF, 0.25, 10.0, 100.0, 10.0]]
