import numpy as np
import pytest

from stochpe.cli import main, read_csv
from stochpe.functionals import CSV_COLUMNS
from stochpe.persistence import load_snapshot

SMALL = """\
grid.nx = 8
grid.ny = 8
grid.nz = 8
solver.dt = 1e-3
solver.t_end = {t_end}
solver.observer_stride = 5
noise.reference_count = 6
initial.kind = random
initial.seed = 2
ensemble.members = 3
ensemble.observe = light
ensemble.radii = 0.5,1,2
ensemble.checkpoint_every = {every}
output.dir = {out}
"""


def _write(tmp_path, name="run", t_end=0.02, every=0):
    out = tmp_path / name
    cfg = tmp_path / f"{name}.cfg"
    cfg.write_text(SMALL.format(t_end=t_end, out=out, every=every))
    return cfg, out


@pytest.mark.parametrize("cmd", [[], ["simulate"], ["ensemble"], ["verify"], ["report"]])
def test_help(cmd, capsys):
    assert main(cmd + ["--help"]) == 0
    assert "usage" in capsys.readouterr().out


def test_bad_usage():
    assert main([]) == 1
    assert main(["frobnicate"]) == 1


def test_missing_config(tmp_path, capsys):
    path = tmp_path / "absent.cfg"
    assert main(["simulate", str(path)]) == 1
    assert str(path) in capsys.readouterr().err


def test_bad_config(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("grid.nx = 8\nsolver.foo = 1\n")
    assert main(["simulate", str(path)]) == 1
    assert "line 2" in capsys.readouterr().err


def test_simulate(tmp_path):
    cfg, out = _write(tmp_path)
    assert main(["simulate", str(cfg)]) == 0
    text = (out / "observables.csv").read_text().splitlines()
    assert text[0].startswith("# stochpe observables v")
    assert text[1] == ",".join(CSV_COLUMNS)
    cols, d = read_csv(out / "observables.csv")
    assert d["t"].tolist() == pytest.approx([0.0, 0.005, 0.01, 0.015, 0.02])
    assert load_snapshot(out / "final.pesf").grid.nx == 8
    assert (out / "stopping.csv").exists() and (out / "config.snapshot").exists()


def test_simulate_t_end_zero(tmp_path):
    cfg, out = _write(tmp_path, t_end=0.0)
    assert main(["simulate", str(cfg)]) == 0
    lines = (out / "observables.csv").read_text().splitlines()
    assert len(lines) == 2
    assert len((out / "stopping.csv").read_text().splitlines()) == 1


def test_simulate_reproducible(tmp_path):
    a, oa = _write(tmp_path, "a")
    b, ob = _write(tmp_path, "b")
    assert main(["simulate", str(a)]) == 0 and main(["simulate", str(b)]) == 0
    for f in ("observables.csv", "stopping.csv", "final.pesf"):
        assert (oa / f).read_bytes() == (ob / f).read_bytes()


def test_ensemble_and_report(tmp_path):
    cfg, out = _write(tmp_path)
    assert main(["ensemble", str(cfg)]) == 0
    assert len(list((out / "members").iterdir())) == 3
    _, s = read_csv(out / "summary.csv")
    assert np.all(np.isfinite(s["E_mean"]))
    assert not (out / "failures.csv").exists()
    assert main(["report", str(out)]) == 0
    for f in ("energy_balance.csv", "log_moment.csv", "tau_exceedance.csv", "kb_profile.csv"):
        assert (out / "report" / f).exists()
    _, kb = read_csv(out / "report" / "kb_profile.csv")
    assert kb["R"].tolist() == [0.5, 1.0, 2.0]


def test_ensemble_resume_identical(tmp_path):
    cfg, out = _write(tmp_path, "full", every=7)
    assert main(["ensemble", str(cfg)]) == 0
    ref = (out / "summary.csv").read_bytes()
    ck = out / "checkpoint.peck"
    assert ck.exists()
    assert main(["ensemble", str(cfg), "--resume", str(ck)]) == 0
    assert (out / "summary.csv").read_bytes() == ref


def test_resume_corrupt(tmp_path):
    cfg, out = _write(tmp_path)
    bad = tmp_path / "bad.peck"
    bad.write_bytes(b"PECK" + b"\0" * 10)
    assert main(["ensemble", str(cfg), "--resume", str(bad)]) == 1


def test_report_missing(tmp_path):
    assert main(["report", str(tmp_path / "nothing")]) == 1


def test_verify_structure(tmp_path, capsys):
    cfg, _ = _write(tmp_path)
    assert main(["verify", str(cfg), "--suite", "structure"]) == 0
    out = capsys.readouterr().out
    assert out.strip().endswith("verify=pass")
    assert "structure.nonlinear_cancellation=pass" in out


def test_verify_failure_exit(tmp_path, monkeypatch):
    from stochpe import verify

    monkeypatch.setattr(verify, "run_suites", lambda *a, **k: [verify.Check("x", False)])
    cfg, _ = _write(tmp_path)
    assert main(["verify", str(cfg), "--suite", "noise"]) == 3
