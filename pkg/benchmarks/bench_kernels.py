"""Compare the compiled and numpy kernel backends.

Times each fused kernel on batch-shaped inputs, then times whole ensemble
steps with the backend forced through ``STOCHPE_KERNELS`` in a subprocess.

    python3 benchmarks/bench_kernels.py [--members 64] [--n 16] [--repeat 5]
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from stochpe import _kernels

STEP_SNIPPET = """
import time, numpy as np
from stochpe import _kernels
from stochpe.grid import Grid, random_field_in_H
from stochpe.integrator import BatchRunner, SolverConfig, make_rng
from stochpe.noise import reference_noise
from stochpe.stopping import StoppingConfig
g = Grid({n}, {n}, {n})
a0 = np.stack([random_field_in_H(g, s).data for s in range({m})])
cfg = SolverConfig(dt=1e-3, t_end={steps} * 1e-3, observer_stride=10)
r = BatchRunner(g, cfg, reference_noise(g), a0, [make_rng(s) for s in range({m})],
                stopping=StoppingConfig(), observe="full")
t = time.perf_counter(); r.run(); dt = time.perf_counter() - t
print(_kernels.BACKEND, dt / {steps})
"""


def kernel_inputs(members, n, rng):
    nh = n // 2 + 1
    phys = rng.standard_normal((members, 3, n, n, n))
    fhat = rng.standard_normal((members, 5, n, nh, n)) + 1j * rng.standard_normal((members, 5, n, nh, n))
    a = rng.standard_normal((members, 2, n, nh, n)) + 1j * rng.standard_normal((members, 2, n, nh, n))
    k = 2 * np.pi * np.fft.fftfreq(n, 1.0 / n)
    kx, ky, kz = k[:, None, None], np.abs(k[None, :nh, None]), np.pi * k[None, None, :] / (2 * np.pi)
    mask = (np.abs(kx) < 20) & (np.abs(ky) < 20) & (np.abs(kz) < 20) & np.ones((n, nh, n), bool)
    vals = rng.standard_normal((members, 2, 8 * n**3))
    decay = rng.random((n, nh, n))
    return {
        "flux_products": lambda K: K.flux_products(phys),
        "flux_divergence": lambda K: K.flux_divergence(fhat, kx, ky, kz, mask),
        "etd_update": lambda K: K.etd_update(a, a, a, decay, 1e-3),
        "vector_power_sum(p=14)": lambda K: K.vector_power_sum(vals, 14.0),
        "vector_abs_pow(p=6)": lambda K: K.vector_abs_pow(vals, 6.0),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--members", type=int, default=64)
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--steps", type=int, default=20)
    args = ap.parse_args(argv)

    try:
        cy = _kernels.get_backend("cython")
    except ImportError:
        print("compiled backend not built; nothing to compare")
        return 1
    py = _kernels.get_backend("python")
    cases = kernel_inputs(args.members, args.n, np.random.default_rng(0))
    print(f"kernels: {args.members} members, {args.n}^3 grid, best of {args.repeat} (ms)")
    print(f"{'kernel':<24}{'python':>10}{'cython':>10}{'speedup':>10}")
    for name, fn in cases.items():
        tp = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat)) * 1e3
        tc = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<24}{tp:>10.2f}{tc:>10.2f}{tp / tc:>10.2f}")

    print(f"\nfull step (observe=full every 10 steps, stopping on), {args.steps} steps (ms/step)")
    code = STEP_SNIPPET.format(n=args.n, m=args.members, steps=args.steps)
    for backend in ("python", "cython"):
        env = dict(os.environ, STOCHPE_KERNELS=backend)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        name, per = out.stdout.split()
        print(f"{name:<24}{float(per) * 1e3:>10.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
