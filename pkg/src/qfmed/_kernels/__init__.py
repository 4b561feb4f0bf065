"""Backend selection for the hot backfitting kernel.

The compiled Cython kernel is preferred when present; the NumPy fallback
is used otherwise.  Set ``QFMED_PURE_PYTHON=1`` to force the fallback
(useful for the benchmark and for debugging).
"""

import os

from . import _backfit_py

if os.environ.get("QFMED_PURE_PYTHON", "") not in ("", "0"):
    _impl = _backfit_py
    BACKEND = "python"
else:
    try:
        from . import _backfit_cy as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _backfit_py
        BACKEND = "python"

backfit = _impl.backfit
backfit_python = _backfit_py.backfit
build_operators = _backfit_py.build_operators


def available_backends():
    names = ["python"]
    try:
        from . import _backfit_cy  # noqa: F401

        names.append("cython")
    except ImportError:
        pass
    return names
