"""Backend selection for the hot kernels.

The compiled extension is used when importable; set ``GPINVERSE_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"

if not os.environ.get("GPINVERSE_PURE_PYTHON"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py

sq_exp_gram = _impl.sq_exp_gram
gram_from_sqdisp = _impl.gram_from_sqdisp
sq_exp_cross = _impl.sq_exp_cross
component_contract = _impl.component_contract

__all__ = [
    "BACKEND",
    "sq_exp_gram",
    "gram_from_sqdisp",
    "sq_exp_cross",
    "component_contract",
]
