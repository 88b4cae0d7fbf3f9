"""Backend selection for the path integrator.

The compiled kernel (``_ckernel``) covers scalar states with polynomial
drift terms, which includes every drift preset.  Everything else, or every
call when ``LEVYSDDE_BACKEND=python`` is set, goes through ``_pykernel``.
"""
import os

from . import _pykernel

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

HAVE_COMPILED = _ckernel is not None

_backend = os.environ.get("LEVYSDDE_BACKEND", "auto")


def set_backend(name):
    """``"auto"`` (compiled when possible), ``"compiled"`` or ``"python"``."""
    global _backend
    if name not in ("auto", "compiled", "python"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "compiled" and not HAVE_COMPILED:
        raise RuntimeError("compiled kernel is not available; rebuild with Cython")
    _backend = name


def get_backend():
    return _backend


def resolve(compilable):
    """Name of the backend that will run a drift (``compilable`` from DriftSpec)."""
    if _backend == "python":
        return "python"
    if _backend == "compiled":
        if not compilable:
            raise RuntimeError("drift is not covered by the compiled kernel (needs n = 1, polynomial terms)")
        return "compiled"
    return "compiled" if (compilable and HAVE_COMPILED) else "python"


pykernel = _pykernel
ckernel = _ckernel
