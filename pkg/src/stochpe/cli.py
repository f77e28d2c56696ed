"""Command-line entry point: ``stochpe {simulate,ensemble,verify,report}``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure,
3 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import math
import os
import sys

import numpy as np

from .errors import CheckpointError, ConfigError, NonFinite, StochPEError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3

OBSERVABLES_HEADER = "# stochpe observables v{version}"


def _fmt(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "n/a"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.17g" % x


def write_csv(path, columns, rows, comment=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(comment + "\n")
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(x) for x in r) + "\n")


def read_csv(path):
    """Read a CSV written by :func:`write_csv`; returns ``(columns, dict of float arrays)``."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    rows = list(csv.reader(lines))
    cols = rows[0]
    data = {c: [] for c in cols}
    for r in rows[1:]:
        for c, x in zip(cols, r):
            data[c].append(math.nan if x == "n/a" else float(x))
    return cols, {c: np.array(v) for c, v in data.items()}


def _observable_rows(times, getter):
    from .functionals import CSV_COLUMNS

    return [[t] + [getter(j, c) for c in CSV_COLUMNS[1:]] for j, t in enumerate(times)]


def _prepare_dir(cfg):
    out = cfg["output.dir"]
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.snapshot"), "w", encoding="utf-8") as fh:
        fh.write(cfg.canonical())
    return out


# simulate -----------------------------------------------------------------


def cmd_simulate(args):
    from .functionals import CSV_COLUMNS, CSV_VERSION
    from .integrator import integrate
    from .persistence import save_snapshot
    from .stopping import STOPPING_CSV_COLUMNS, stopping_rows

    from .config import load_config

    cfg = load_config(args.config)
    grid = cfg.grid()
    solver = cfg.solver()
    model = cfg.noise(grid)
    v0 = cfg.initial_field(grid)
    out = _prepare_dir(cfg)
    comment = OBSERVABLES_HEADER.format(version=CSV_VERSION)
    try:
        traj = integrate(v0, solver, model, stopping=cfg.stopping(), store_snapshots=False)
    except NonFinite as exc:
        msg = f"numerical failure at t={exc.time}: {exc}"
        print(msg, file=sys.stderr)
        with open(os.path.join(out, "failure.txt"), "w", encoding="utf-8") as fh:
            fh.write(msg + "\n")
        return EXIT_NUMERIC
    if solver.n_steps == 0:
        # zero-length run: headers only
        write_csv(os.path.join(out, "observables.csv"), CSV_COLUMNS, [], comment)
        write_csv(os.path.join(out, "stopping.csv"), STOPPING_CSV_COLUMNS, [])
    else:
        rows = [f.csv_row(t) for t, f in zip(traj.times, traj.functionals)]
        write_csv(os.path.join(out, "observables.csv"), CSV_COLUMNS, rows, comment)
        write_csv(
            os.path.join(out, "stopping.csv"), STOPPING_CSV_COLUMNS, stopping_rows([solver.seed], [traj.stopping])
        )
    save_snapshot(os.path.join(out, "final.pesf"), traj.final)
    return EXIT_OK


# ensemble -----------------------------------------------------------------

SUMMARY_NAMES = ("E", "Ebar", "J", "K", "L", "Lbar", "L_eps", "Y", "X", "Xbar", "phiX", "log1pXbar", "energy_residual")


def write_ensemble_outputs(out, stats, cfg_ens):
    from .functionals import CSV_COLUMNS, CSV_VERSION
    from .stopping import STOPPING_CSV_COLUMNS, stopping_rows

    comment = OBSERVABLES_HEADER.format(version=CSV_VERSION)
    mdir = os.path.join(out, "members")
    os.makedirs(mdir, exist_ok=True)
    n_steps = cfg_ens.solver.n_steps
    times = stats.times if n_steps else []
    names = [n for n in SUMMARY_NAMES if n in stats.mean]
    for i in range(stats.members):
        rows = _observable_rows(times, lambda j, c: stats.obs[c][j, i] if c in stats.obs else math.nan)
        write_csv(os.path.join(mdir, f"observables_{i:04d}.csv"), CSV_COLUMNS, rows, comment)
    cols = ["t"] + [f"{n}_{s}" for n in names for s in ("mean", "se")]
    rows = [[t] + [x for n in names for x in (stats.mean[n][j], stats.se[n][j])] for j, t in enumerate(times)]
    write_csv(os.path.join(out, "summary.csv"), cols, rows)
    recs = stats.records if n_steps else []
    write_csv(os.path.join(out, "stopping.csv"), STOPPING_CSV_COLUMNS, stopping_rows(stats.seeds, recs))
    rows = []
    if n_steps and "int_tau_before" in stats.obs:
        for i, s in enumerate(stats.seeds):
            for j, t in enumerate(stats.times):
                rows.append([s, t, stats.obs["int_tau_before"][j, i]])
    write_csv(os.path.join(out, "stopping_integrals.csv"), ("seed", "t", "int_tau_before"), rows)
    kb = stats.kb if (n_steps and stats.kb) else {"R": [], "mu": [], "se": []}
    write_csv(os.path.join(out, "kb_profile.csv"), ("R", "mu", "se"), list(zip(kb["R"], kb["mu"], kb["se"])))
    if stats.partial:
        with open(os.path.join(out, "failures.csv"), "w", encoding="utf-8") as fh:
            fh.write("member,seed,fail_time\n")
            for i in np.flatnonzero(stats.failed):
                fh.write(f"{i},{stats.seeds[i]},{_fmt(stats.fail_time[i])}\n")


def cmd_ensemble(args):
    from .config import load_config
    from .ensemble import run_ensemble

    cfg = load_config(args.config)
    ens = cfg.ensemble()
    out = _prepare_dir(cfg)
    ck = os.path.join(out, "checkpoint.peck")
    stats = run_ensemble(ens, checkpoint_path=ck, resume=args.resume)
    write_ensemble_outputs(out, stats, ens)
    if stats.partial:
        bad = np.flatnonzero(stats.failed)
        print(f"{bad.size} member(s) failed with non-finite values; first: member {bad[0]}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# verify -------------------------------------------------------------------


def cmd_verify(args):
    from .config import load_config
    from .verify import SUITES, run_suites

    cfg = load_config(args.config)
    grid = cfg.grid()
    suites = SUITES if args.suite == "all" else (args.suite,)
    checks = run_suites(suites, grid, cfg.noise(grid), cfg.solver().dealias)
    for c in checks:
        print(c.line())
    ok = all(c.ok for c in checks)
    print(f"verify={'pass' if ok else 'fail'}")
    return EXIT_OK if ok else EXIT_VERIFY


# report -------------------------------------------------------------------


def cmd_report(args):
    run = args.run_dir
    if not os.path.isdir(run):
        print(f"run directory not found: {run}", file=sys.stderr)
        return EXIT_CONFIG
    summary = os.path.join(run, "summary.csv")
    if not os.path.exists(summary):
        print(f"missing {summary}", file=sys.stderr)
        return EXIT_CONFIG
    out = os.path.join(run, "report")
    os.makedirs(out, exist_ok=True)
    _, s = read_csv(summary)
    t = s.get("t", np.array([]))
    write_csv(
        os.path.join(out, "energy_balance.csv"),
        ("t", "residual", "se"),
        list(zip(t, s.get("energy_residual_mean", []), s.get("energy_residual_se", []))),
    )
    write_csv(os.path.join(out, "log_moment.csv"), ("t", "mean_log1pX"), list(zip(t, s.get("phiX_mean", []))))
    _, si = read_csv(os.path.join(run, "stopping_integrals.csv"))
    rows = []
    if si["t"].size:
        t_last = si["t"].max()
        final = si["int_tau_before"][si["t"] == t_last]
        for kappa in np.logspace(0, 3, 13):
            rows.append([kappa, float(np.mean(final > kappa))])
    write_csv(os.path.join(out, "tau_exceedance.csv"), ("kappa", "p_tau_before_t"), rows)
    _, kb = read_csv(os.path.join(run, "kb_profile.csv"))
    write_csv(os.path.join(out, "kb_profile.csv"), ("R", "mu"), list(zip(kb["R"], kb["mu"])))
    return EXIT_OK


# entry --------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="stochpe", description="Stochastic primitive equations simulator.")
    sub = p.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("simulate", help="run one trajectory", description="Run one trajectory.")
    sp.add_argument("config", help="flat key=value configuration file")
    sp.set_defaults(func=cmd_simulate)
    sp = sub.add_parser("ensemble", help="run a Monte Carlo ensemble", description="Run a Monte Carlo ensemble.")
    sp.add_argument("config", help="flat key=value configuration file")
    sp.add_argument("--resume", metavar="CHECKPOINT", help="continue from a checkpoint file")
    sp.set_defaults(func=cmd_ensemble)
    sp = sub.add_parser("verify", help="run invariant suites", description="Run invariant suites.")
    sp.add_argument("config", help="flat key=value configuration file")
    sp.add_argument("--suite", choices=("structure", "noise", "inequalities", "balance", "all"), default="all")
    sp.set_defaults(func=cmd_verify)
    sp = sub.add_parser("report", help="aggregate a run directory", description="Aggregate an ensemble run directory into plot data.")
    sp.add_argument("run_dir", help="output directory of an ensemble run")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFinite as exc:
        print(f"numerical failure at t={exc.time}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except StochPEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
