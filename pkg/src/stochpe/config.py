"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored.  Unknown keys, duplicates and
malformed values raise :class:`ConfigError` carrying the line and column of
the offending text.  ``noise.modes`` is either ``none``, ``reference`` (the
lowest-mode spectrum sized by ``noise.reference_count`` and
``noise.reference_total``) or ``n1,n2,m,pol,alpha;...``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError
from .grid import Grid
from .spectral_ops import DealiasRule

_U64 = 2**64


def _int(lo=None):
    def parse(s):
        v = int(s, 10)
        if lo is not None and v < lo:
            raise ValueError(f"must be >= {lo}")
        return v

    return parse


def _u64(s):
    v = int(s, 10)
    if not 0 <= v < _U64:
        raise ValueError("must be an unsigned 64-bit integer")
    return v


def _float(lo=None, strict=False):
    def parse(s):
        v = float(s)
        if not math.isfinite(v):
            raise ValueError("must be finite")
        if lo is not None and (v <= lo if strict else v < lo):
            raise ValueError(f"must be {'>' if strict else '>='} {lo}")
        return v

    return parse


def _bool(s):
    low = s.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected true or false")


def _choice(*options):
    def parse(s):
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return s

    return parse


def _floats(s):
    if not s.strip():
        return ()
    return tuple(_float(0.0)(x.strip()) for x in s.split(","))


def _str(s):
    return s


def parse_modes(s):
    """``"n1,n2,m,pol,alpha;..."`` -> list of tuples; also accepts ``none``/``reference``."""
    s = s.strip()
    if s in ("", "none"):
        return []
    if s == "reference":
        return "reference"
    out = []
    for item in s.split(";"):
        item = item.strip()
        if not item:
            continue
        parts = [p.strip() for p in item.split(",")]
        if len(parts) != 5:
            raise ValueError(f"mode {item!r} needs 5 fields n1,n2,m,pol,alpha")
        n1, n2, m = (int(p, 10) for p in parts[:3])
        alpha = float(parts[4])
        if not (math.isfinite(alpha) and alpha >= 0):
            raise ValueError(f"mode {item!r} has invalid amplitude")
        out.append((n1, n2, m, parts[3], alpha))
    return out


# key -> (parser, default)
SCHEMA = {
    "grid.nx": (_int(4), 16),
    "grid.ny": (_int(4), 16),
    "grid.nz": (_int(4), 16),
    "solver.dt": (_float(0.0, strict=True), 1e-3),
    "solver.t_end": (_float(0.0), 1.0),
    "solver.epsilon": (_float(0.0), 0.0),
    "solver.seed": (_u64, 0),
    "solver.observer_stride": (_int(1), 10),
    "solver.nonlinear": (_bool, True),
    "dealias.fraction": (_float(0.0, strict=True), 2.0 / 3.0),
    "noise.gain": (_choice("additive", "bounded"), "additive"),
    "noise.modes": (parse_modes, "reference"),
    "noise.reference_count": (_int(0), 16),
    "noise.reference_total": (_float(0.0), 1.0),
    "stopping.gamma": (_float(0.0), 10.0),
    "stopping.kappa": (_float(0.0), 100.0),
    "stopping.lambda": (_float(0.0), 10.0),
    "ensemble.members": (_int(1), 16),
    "ensemble.base_seed": (_u64, 0),
    "ensemble.radii": (_floats, ()),
    "ensemble.checkpoint_every": (_int(0), 0),
    "ensemble.observe": (_choice("full", "light"), "full"),
    "output.dir": (_str, "run"),
    "initial.kind": (_choice("zero", "random", "file"), "zero"),
    "initial.seed": (_u64, 0),
    "initial.norm": (_float(0.0), 1.0),
    "initial.path": (_str, ""),
}


@dataclass
class RunConfig:
    values: dict
    source: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def canonical(self):
        """Resolved configuration (defaults filled in) as sorted ``key = value`` lines."""
        lines = []
        for k in sorted(SCHEMA):
            lines.append(f"{k} = {self.source.get(k, _render(self.values[k]))}")
        return "\n".join(lines) + "\n"

    # builders ----------------------------------------------------------

    def grid(self):
        return Grid(self["grid.nx"], self["grid.ny"], self["grid.nz"])

    def solver(self):
        from .integrator import SolverConfig

        return SolverConfig(
            dt=self["solver.dt"],
            t_end=self["solver.t_end"],
            dealias=DealiasRule(self["dealias.fraction"]),
            epsilon=self["solver.epsilon"],
            observer_stride=self["solver.observer_stride"],
            seed=self["solver.seed"],
            nonlinear=self["solver.nonlinear"],
        )

    def noise(self, grid=None):
        from .noise import NoiseModel, reference_noise

        grid = grid or self.grid()
        modes = self["noise.modes"]
        if modes == "reference":
            if self["noise.reference_count"] == 0:
                return NoiseModel(grid, (), self["noise.gain"])
            return reference_noise(
                grid, self["noise.reference_count"], self["noise.reference_total"], gain=self["noise.gain"]
            )
        return NoiseModel.from_tuples(grid, modes, self["noise.gain"])

    def stopping(self):
        from .stopping import StoppingConfig

        return StoppingConfig(self["stopping.gamma"], self["stopping.kappa"], self["stopping.lambda"])

    def initial_field(self, grid=None):
        from .grid import SpectralField, random_field_in_H
        from .persistence import load_snapshot

        grid = grid or self.grid()
        kind = self["initial.kind"]
        if kind == "zero":
            return SpectralField.zeros(grid)
        if kind == "random":
            return random_field_in_H(grid, self["initial.seed"], norm=self["initial.norm"])
        return load_snapshot(self["initial.path"], grid)

    def ensemble(self, base_dir=None):
        from .ensemble import EnsembleConfig

        g = self.grid()
        kind = self["initial.kind"]
        return EnsembleConfig(
            grid=g,
            members=self["ensemble.members"],
            base_seed=self["ensemble.base_seed"],
            solver=self.solver(),
            noise=self.noise(g),
            stopping=self.stopping(),
            radii=self["ensemble.radii"],
            checkpoint_every=self["ensemble.checkpoint_every"],
            initial=kind,
            initial_seed=self["initial.seed"],
            initial_norm=self["initial.norm"],
            initial_field=self.initial_field(g) if kind == "file" else None,
            observe=self["ensemble.observe"],
        )


def _render(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(repr(x) for x in v)
    if isinstance(v, list):
        return ";".join(",".join(str(p) for p in m) for m in v) or "none"
    return str(v)


def parse_config(text):
    values = {k: d for k, (_, d) in SCHEMA.items()}
    source = {}
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        if "=" not in line:
            col = len(line) - len(line.lstrip()) + 1
            raise ConfigError("expected 'key = value'", lineno, col)
        key_part, val_part = line.split("=", 1)
        key = key_part.strip()
        kcol = len(key_part) - len(key_part.lstrip()) + 1
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", lineno, kcol)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", lineno, kcol)
        seen[key] = lineno
        val = val_part.strip()
        vcol = len(key_part) + 2 + (len(val_part) - len(val_part.lstrip()))
        try:
            values[key] = SCHEMA[key][0](val)
        except ValueError as exc:
            raise ConfigError(f"invalid value {val!r} for {key}: {exc}", lineno, vcol) from None
        source[key] = val
    _validate(values)
    return RunConfig(values, source)


def _validate(values):
    for k in ("grid.nx", "grid.ny", "grid.nz"):
        if values[k] % 2:
            raise ConfigError(f"{k} must be even")
    if values["solver.epsilon"] > 1.0 / 42.0 + 1e-15:
        raise ConfigError("solver.epsilon must lie in [0, 1/42]")
    if values["dealias.fraction"] > 1.0:
        raise ConfigError("dealias.fraction must lie in (0, 1]")
    if values["initial.kind"] == "file" and not values["initial.path"]:
        raise ConfigError("initial.kind = file needs initial.path")
    n = values["solver.t_end"] / values["solver.dt"]
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ConfigError("solver.t_end must be a whole number of solver.dt steps")


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    return parse_config(text)
