"""Selects the interpreter kernel at import time.

The compiled ``_ckernel`` is used when it was built; ``ADAPTVM_PURE=1`` forces
the pure-Python ``_pykernel``. Both expose ``run_frame``, ``sweep`` and
``count_refs`` with identical semantics.
"""
import os

from . import _pykernel as pure

if os.environ.get("ADAPTVM_PURE") == "1":
    compiled = None
else:
    try:
        from . import _ckernel as compiled
    except ImportError:  # extension not built
        compiled = None

active = compiled or pure
run_frame = active.run_frame
sweep = active.sweep
count_refs = active.count_refs
IMPLEMENTATION = active.IMPLEMENTATION


def available():
    """Kernels importable in this environment, compiled first."""
    return [k for k in (compiled, pure) if k is not None]
