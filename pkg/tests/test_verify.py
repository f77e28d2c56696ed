import math

from stochpe.noise import NoiseModel, reference_noise
from stochpe.verify import Check, balance_suite, inequality_suite, noise_suite, run_suites, structure_suite

import pytest


def test_check_line():
    assert Check("a.b", True).line() == "a.b=pass"
    assert Check("a.b", False, 0.5).line() == "a.b=fail value=5.000000e-01"


def test_structure(g8):
    checks = structure_suite(g8, seeds=range(2))
    assert checks and all(c.ok for c in checks), [c.line() for c in checks if not c.ok]


def test_noise(g8):
    assert all(c.ok for c in noise_suite(reference_noise(g8, 8)))


def test_inequalities(g8):
    checks = inequality_suite(g8, n_fields=3)
    assert all(c.ok for c in checks), [c.line() for c in checks if not c.ok]


def test_balance(g8):
    checks = balance_suite(g8, reference_noise(g8, 8), steps=20, members=8)
    assert all(c.ok for c in checks), [c.line() for c in checks if not c.ok]


def test_balance_without_noise(g8):
    checks = balance_suite(g8, NoiseModel(g8), steps=10)
    assert [c.name for c in checks] == ["balance.dissipation_monotone", "balance.deterministic_defect"]


def test_unknown_suite(g8):
    with pytest.raises(ValueError):
        run_suites(["bogus"], g8, NoiseModel(g8))
