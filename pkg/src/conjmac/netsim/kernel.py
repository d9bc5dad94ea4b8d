"""Pick the compiled slot loop when it is importable, else the pure-Python one.

Set CONJMAC_PURE_PYTHON=1 to force the fallback.
"""
import os

from . import _pykernel

if os.environ.get("CONJMAC_PURE_PYTHON", "") not in ("", "0"):
    simulate_chunk = _pykernel.simulate_chunk
    KERNEL_BACKEND = "python"
else:
    try:
        from ._ckernel import simulate_chunk
        KERNEL_BACKEND = "cython"
    except ImportError:  # extension not built
        simulate_chunk = _pykernel.simulate_chunk
        KERNEL_BACKEND = "python"

PERSIST, DCF, SLOT_BR, SLOT_GP = _pykernel.PERSIST, _pykernel.DCF, _pykernel.SLOT_BR, _pykernel.SLOT_GP

__all__ = ["simulate_chunk", "KERNEL_BACKEND", "PERSIST", "DCF", "SLOT_BR", "SLOT_GP"]
