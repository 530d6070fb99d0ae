"""Kernel backend selection.

The compiled extension is used when importable; setting ``VAM_PURE_PYTHON=1``
before import forces the numpy fallback.
"""
import os

from . import _fallback

if os.environ.get("VAM_PURE_PYTHON", "").strip() not in ("", "0"):
    impl = _fallback
else:
    try:
        from . import _kernels as impl
    except ImportError:
        impl = _fallback

BACKEND = "python" if impl is _fallback else "cython"

kprototype_cross = impl.kprototype_cross
rate_adjusted_cross = impl.rate_adjusted_cross
va_liabilities = impl.va_liabilities
