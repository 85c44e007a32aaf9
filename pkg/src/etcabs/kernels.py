"""Backend selection for the hot loops.

The compiled extension is used when it imports; setting
``ETCABS_PURE_PYTHON=1`` forces the pure-Python implementation.
"""
import os

from etcabs import _pykernels

if os.environ.get("ETCABS_PURE_PYTHON") == "1":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from etcabs import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"

integrate_interval = _impl.integrate_interval
cone_min_lmax = _impl.cone_min_lmax
sym_lmax = _impl.sym_lmax

__all__ = ["BACKEND", "integrate_interval", "cone_min_lmax", "sym_lmax"]
