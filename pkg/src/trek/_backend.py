"""Select the compiled kernels when available, else the NumPy fallback.

Set ``TREK_PURE_PYTHON=1`` before import to force the fallback.
"""

import os

from . import _pykernels

python_kernels = _pykernels

compiled_kernels = None
if not os.environ.get("TREK_PURE_PYTHON"):
    try:
        from . import _ckernels as compiled_kernels
    except ImportError:
        compiled_kernels = None

kernels = compiled_kernels if compiled_kernels is not None else python_kernels
BACKEND = "cython" if compiled_kernels is not None else "python"


def get_kernels(name=None):
    """Return the kernel module called ``name`` ("cython" or "python")."""
    if name is None:
        return kernels
    if name == "python":
        return python_kernels
    if name == "cython":
        if compiled_kernels is None:
            raise RuntimeError("compiled extension trek._ckernels is not available")
        return compiled_kernels
    raise ValueError(f"unknown backend {name!r}")
