"""Kernel selection: compiled extension if available, numpy fallback otherwise.

Set the environment variable DQDYN_PURE_PYTHON=1 before import to force the
fallback (used by the benchmark and the equivalence tests).
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("DQDYN_PURE_PYTHON", "").strip() in ("1", "true", "yes"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

propagate_quadrature = _impl.propagate_quadrature
propagate_lattice = _impl.propagate_lattice


def kernel_backend() -> str:
    """Name of the active kernel implementation: 'cython' or 'numpy'."""
    return _impl.IMPL
