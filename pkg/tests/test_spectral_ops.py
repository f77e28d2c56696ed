import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import field
from stochpe.errors import ConstraintViolation, DomainError
from stochpe.grid import Grid, SpectralField, _leray, random_field_in_H
from stochpe.spectral_ops import (
    DealiasRule,
    MultiplierSpec,
    advective_form,
    apply_multiplier,
    nonlinear_term,
    pressure_gradient,
    projected_drift,
    vorticity_rhs,
    vorticity_transport,
)

PI = np.pi
RULE = DealiasRule()


def advection_2d(u1, u2, frac=2.0 / 3.0):
    """Independent 2D oracle: dealiased u . grad u on the unit torus with full complex FFTs."""
    n = u1.shape[0]
    k = 2 * PI * np.fft.fftfreq(n, 1.0 / n)
    kx, ky = np.meshgrid(k, k, indexing="ij")
    idx = np.abs(np.fft.fftfreq(n, 1.0 / n))
    keep1 = 2 * idx < frac * n - 1e-9
    keep = keep1[:, None] & keep1[None, :]
    keep[n // 2, :] = keep[:, n // 2] = False
    h1, h2 = np.fft.fft2(u1) * keep, np.fft.fft2(u2) * keep
    phys = lambda h: np.fft.ifft2(h).real
    a1, a2 = phys(h1), phys(h2)
    n1 = a1 * phys(1j * kx * h1) + a2 * phys(1j * ky * h1)
    n2 = a1 * phys(1j * kx * h2) + a2 * phys(1j * ky * h2)
    return phys(np.fft.fft2(n1) * keep), phys(np.fft.fft2(n2) * keep)


class TestNonlinear:
    def test_zero(self, g8):
        assert nonlinear_term(SpectralField.zeros(g8)).norm() == 0.0

    def test_barotropic_matches_2d_oracle(self, g16):
        # z-independent, divergence free: Taylor-Green plus a second streamfunction mode
        def fn(x, y, z):
            u1 = np.sin(2 * PI * x) * np.cos(2 * PI * y) + 0.4 * np.cos(4 * PI * y + 0.3) + 0 * z
            u2 = -np.cos(2 * PI * x) * np.sin(2 * PI * y) + 0.7 * np.sin(2 * PI * x - 4 * PI * y) + 0 * z
            u1 = u1 + 1.4 * np.sin(2 * PI * x - 4 * PI * y) + 0 * z
            return u1, u2

        v = field(g16, fn)
        assert v.norm() > 0
        n = nonlinear_term(v).to_physical().values
        x, y, _ = g16.coords()
        u1, u2 = (np.broadcast_to(c, g16.shape)[..., 0] for c in fn(x, y, 0 * x))
        o1, o2 = advection_2d(u1, u2)
        assert np.max(np.abs(n[0, ..., 3] - o1)) < 1e-12 * np.abs(o1).max()
        assert np.max(np.abs(n[1, ..., 3] - o2)) < 1e-12 * np.abs(o2).max()
        # the 3D result is z-independent
        assert np.max(np.abs(n - n[..., :1])) < 1e-12

    @pytest.mark.parametrize("shape", [(16, 16, 16), (32, 32, 16)])
    def test_energy_cancellation(self, shape):
        g = Grid(*shape)
        for s in range(5):
            v = random_field_in_H(g, s, spectrum_decay=1.0)
            n = nonlinear_term(v)
            assert abs(v.inner(n)) <= 1e-10 * n.norm() * v.norm()

    def test_flux_equals_advective_form(self, g16):
        v = random_field_in_H(g16, 3)
        a, b = nonlinear_term(v), advective_form(v)
        assert (a - b).norm() <= 1e-12 * a.norm()

    def test_output_is_truncated(self, g16):
        n = nonlinear_term(random_field_in_H(g16, 1))
        assert np.abs(n.data[..., ~RULE.mask(g16)]).max() == 0.0

    def test_needs_H(self, g8):
        u = field(g8, lambda x, y, z: (np.sin(2 * PI * x) + 0 * z, 0 * z))
        with pytest.raises(ConstraintViolation):
            nonlinear_term(u)


class TestPressure:
    def test_zero(self, g8):
        assert pressure_gradient(SpectralField.zeros(g8)).norm() == 0.0

    def test_baroclinic_source_vanishes(self, g16):
        # v = cos(pi z) * (1, 0): both quadratic sources are z-quadratic and x-independent
        v = field(g16, lambda x, y, z: (np.cos(PI * z) + 0 * x, 0 * z))
        assert pressure_gradient(v).norm() < 1e-14

    def test_cancellation_and_forms(self, g16):
        for s in range(5):
            v = random_field_in_H(g16, 10 + s, spectrum_decay=1.0)
            p = pressure_gradient(v)
            assert abs(p.inner(v)) <= 1e-10 * p.norm() * v.norm()
            q = pressure_gradient(v, form="advective")
            assert (p - q).norm() <= 1e-9 * p.norm()

    def test_z_independent(self, g16):
        p = pressure_gradient(random_field_in_H(g16, 2)).data
        assert np.abs(p[..., 1:]).max() == 0.0

    def test_pressure_completes_projection(self, g16):
        # N + grad p is the projected advection term
        v = random_field_in_H(g16, 6)
        n = nonlinear_term(v)
        p = pressure_gradient(v)
        proj = _leray(g16, n.data)
        assert np.max(np.abs(n.data + p.data - proj)) <= 1e-12 * np.abs(proj).max()

    def test_unknown_form(self, g8):
        with pytest.raises(ValueError):
            pressure_gradient(SpectralField.zeros(g8), form="bogus")


class TestVorticity:
    def test_zero_and_barotropic(self, g16):
        assert vorticity_rhs(SpectralField.zeros(g16)).norm() == 0.0
        v = field(g16, lambda x, y, z: (np.sin(2 * PI * y) + 0 * z, np.cos(2 * PI * x) + 0 * z))
        assert vorticity_rhs(v).norm() < 1e-12

    def test_chain_rule(self, g16):
        for s in range(3):
            v = random_field_in_H(g16, 20 + s)
            n = nonlinear_term(v)
            ref = 1j * g16.kz_d * (-n.data - g16.k2 * v.data)
            out = vorticity_rhs(v).data
            assert np.sqrt(g16.norm_sq(out - ref)) <= 1e-9 * np.sqrt(g16.norm_sq(ref))

    def test_transport_cancellation(self, g16):
        for s in range(3):
            v = random_field_in_H(g16, 30 + s, spectrum_decay=1.0)
            th = SpectralField(g16, 1j * g16.kz_d * v.data)
            tr = vorticity_transport(v)
            assert abs(th.inner(tr)) <= 1e-10 * th.norm() * tr.norm()


class TestMultipliers:
    def test_fractional_zero_is_identity(self, g8):
        v = random_field_in_H(g8, 0)
        assert np.array_equal(apply_multiplier(MultiplierSpec("fractional", s=0.0), v).data, v.data)

    def test_fractional_two_on_eigenmode(self, g16):
        v = field(g16, lambda x, y, z: (0 * x, np.cos(2 * PI * x) + 0 * z))
        out = apply_multiplier(MultiplierSpec("fractional", s=2.0), v)
        assert np.allclose(out.data, (2 * PI) ** 2 * v.data, atol=1e-12)

    def test_fractional_one_is_gradient_norm(self, g16):
        v = random_field_in_H(g16, 4)
        d = apply_multiplier(MultiplierSpec("fractional", s=1.0), v).norm() ** 2
        grads = sum(
            apply_multiplier(spec, v).norm() ** 2
            for spec in (MultiplierSpec("gradient_h", axis=0), MultiplierSpec("gradient_h", axis=1), MultiplierSpec("gradient_z"))
        )
        assert d == pytest.approx(grads, rel=1e-12)

    def test_heat_semigroup_composes(self, g8):
        a = MultiplierSpec("heat_semigroup", dt=0.01).symbol(g8)
        b = MultiplierSpec("heat_semigroup", dt=0.02).symbol(g8)
        c = MultiplierSpec("heat_semigroup", dt=0.03).symbol(g8)
        assert np.allclose(a * b, c, rtol=1e-14, atol=0)
        assert np.all((c > 0) & (c <= 1))

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
    def test_fractional_composition(self, s1, s2):
        g = Grid(8, 8, 8)
        v = random_field_in_H(g, 5)
        ab = apply_multiplier(MultiplierSpec("fractional", s=s1), apply_multiplier(MultiplierSpec("fractional", s=s2), v))
        c = apply_multiplier(MultiplierSpec("fractional", s=s1 + s2), v)
        assert (ab - c).norm() <= 1e-12 * c.norm()

    def test_laplacian_and_inverse(self, g8):
        v = random_field_in_H(g8, 3)
        bar = np.array(v.data)
        bar[..., 1:] = 0.0
        v = SpectralField(g8, bar)
        lap = apply_multiplier(MultiplierSpec("laplacian"), v)
        back = apply_multiplier(MultiplierSpec("inv_laplacian_h"), lap)
        assert (back - v).norm() <= 1e-12 * v.norm()

    def test_negative_power_needs_zero_mean(self, g8):
        u = field(g8, lambda x, y, z: (1.0 + 0 * x, 0 * x))
        with pytest.raises(DomainError):
            apply_multiplier(MultiplierSpec("fractional", s=-1.0), u)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            MultiplierSpec("curl")

    def test_dealias_fraction_validated(self):
        with pytest.raises(ValueError):
            DealiasRule(0.0)
        with pytest.raises(ValueError):
            DealiasRule(1.5)


def test_projected_drift_in_H(g16):
    from stochpe.grid import constraint_residual

    d = projected_drift(random_field_in_H(g16, 7))
    assert constraint_residual(d) <= 1e-12
