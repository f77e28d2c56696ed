"""Fused pointwise kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it was built; set ``STOCHPE_KERNELS=python``
to force the fallback.  ``BACKEND`` names the active implementation.
"""
import os

from . import _pykernels

_forced = os.environ.get("STOCHPE_KERNELS", "").strip().lower()

_impl = _pykernels
BACKEND = "python"
if _forced not in ("python", "py", "numpy"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        if _forced in ("cython", "c"):
            raise
        _impl = _pykernels

flux_products = _impl.flux_products
flux_divergence = _impl.flux_divergence
etd_update = _impl.etd_update
vector_power_sum = _impl.vector_power_sum
vector_abs_pow = _impl.vector_abs_pow


def get_backend(name):
    """Return the kernel module for ``"python"`` or ``"cython"`` explicitly."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")
